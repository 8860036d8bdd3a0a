//! Fill-reducing symmetric ordering by graph nested dissection.
//!
//! The graph of `A + A^T` is split by a middle level of a breadth-first
//! search started from a pseudo-peripheral vertex; both halves are ordered
//! recursively and the separator is numbered last.

use super::SparseMatrix;

/// Parts at or below this size are numbered as they come.
const LEAF_SIZE: usize = 32;

/// `perm[k]` is the vertex eliminated at step `k`.
pub fn nested_dissection(a: &SparseMatrix) -> Vec<usize> {
    let graph = Graph::symmetric(a);
    let n = graph.len();
    let mut order = Vec::with_capacity(n);
    let mut label = vec![0usize; n];
    let mut next_label = 1;
    let mut work = Work {
        level: vec![usize::MAX; n],
        queue: Vec::with_capacity(n),
    };
    let all: Vec<usize> = (0..n).collect();
    // Explicit stack of (part, its label, separator to emit afterwards).
    enum Task {
        Split(Vec<usize>, usize),
        Emit(Vec<usize>),
    }
    let mut tasks = vec![Task::Split(all, 0)];
    while let Some(task) = tasks.pop() {
        let (part, id) = match task {
            Task::Emit(sep) => {
                order.extend(sep);
                continue;
            }
            Task::Split(part, id) => (part, id),
        };
        if part.len() <= LEAF_SIZE {
            order.extend(part);
            continue;
        }
        let Some((low, sep, high, rest)) = graph.bisect(&part, id, &label, &mut work) else {
            order.extend(part);
            continue;
        };
        // Pushed in reverse: low, high, rest are ordered before the separator.
        tasks.push(Task::Emit(sep));
        for piece in [rest, high, low] {
            if piece.is_empty() {
                continue;
            }
            for &v in &piece {
                label[v] = next_label;
            }
            tasks.push(Task::Split(piece, next_label));
            next_label += 1;
        }
    }
    order
}

struct Graph {
    offsets: Vec<usize>,
    neighbours: Vec<usize>,
}

struct Work {
    level: Vec<usize>,
    queue: Vec<usize>,
}

impl Graph {
    fn symmetric(a: &SparseMatrix) -> Self {
        let n = a.nrows();
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for r in 0..n {
            for (c, _) in a.row(r) {
                if c != r && c < n {
                    edges[r].push(c);
                    edges[c].push(r);
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbours = Vec::new();
        offsets.push(0);
        for mut e in edges {
            e.sort_unstable();
            e.dedup();
            neighbours.extend(e);
            offsets.push(neighbours.len());
        }
        Self { offsets, neighbours }
    }

    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    fn adjacent(&self, v: usize) -> &[usize] {
        &self.neighbours[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Breadth-first search within the part labelled `id`; fills
    /// `work.queue` with the visited vertices in level order and returns the
    /// number of levels.
    fn bfs(&self, start: usize, id: usize, label: &[usize], work: &mut Work) -> usize {
        for &v in &work.queue {
            work.level[v] = usize::MAX;
        }
        work.queue.clear();
        work.queue.push(start);
        work.level[start] = 0;
        let mut head = 0;
        while head < work.queue.len() {
            let v = work.queue[head];
            head += 1;
            for &u in self.adjacent(v) {
                if label[u] == id && work.level[u] == usize::MAX {
                    work.level[u] = work.level[v] + 1;
                    work.queue.push(u);
                }
            }
        }
        work.level[*work.queue.last().expect("start is queued")] + 1
    }

    /// Splits `part` into (low levels, separator, high levels, unreached).
    #[allow(clippy::type_complexity)]
    fn bisect(
        &self,
        part: &[usize],
        id: usize,
        label: &[usize],
        work: &mut Work,
    ) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>)> {
        // Pseudo-peripheral start: repeat BFS from the last vertex reached
        // while the eccentricity grows.
        let mut start = part[0];
        let mut depth = self.bfs(start, id, label, work);
        for _ in 0..8 {
            let far = *work.queue.last().expect("nonempty");
            let d = self.bfs(far, id, label, work);
            if d <= depth {
                self.bfs(start, id, label, work);
                break;
            }
            start = far;
            depth = d;
        }
        if depth < 3 {
            return None;
        }
        let reached = work.queue.len();
        let mut count = vec![0usize; depth];
        for &v in &work.queue {
            count[work.level[v]] += 1;
        }
        let mut mid = 1;
        let mut below = count[0];
        while mid < depth - 1 && below + count[mid] <= reached / 2 {
            below += count[mid];
            mid += 1;
        }
        let (mut low, mut sep, mut high) = (Vec::new(), Vec::new(), Vec::new());
        for &v in &work.queue {
            match work.level[v].cmp(&mid) {
                std::cmp::Ordering::Less => low.push(v),
                std::cmp::Ordering::Equal => sep.push(v),
                std::cmp::Ordering::Greater => high.push(v),
            }
        }
        let rest = part.iter().copied().filter(|&v| work.level[v] == usize::MAX).collect();
        for &v in &work.queue {
            work.level[v] = usize::MAX;
        }
        work.queue.clear();
        low.sort_unstable();
        sep.sort_unstable();
        high.sort_unstable();
        Some((low, sep, high, rest))
    }
}
