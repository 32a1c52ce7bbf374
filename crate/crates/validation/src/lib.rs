//! Reporting and oracle helpers shared by the acceptance suite.

use cvauth::harness::{bernoulli_stderr, EstimateRow};

pub struct Criterion {
    id: u32,
    title: &'static str,
    ok: bool,
    notes: Vec<String>,
}

impl Criterion {
    pub fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            ok: true,
            notes: Vec::new(),
        }
    }

    /// Records one check; failing checks are marked in the detail lines.
    pub fn check(&mut self, ok: bool, note: String) {
        self.ok &= ok;
        self.notes.push(format!("{} {note}", if ok { "ok  " } else { "FAIL" }));
    }

    pub fn info(&mut self, note: String) {
        self.notes.push(format!("info {note}"));
    }

    pub fn finish(self) -> bool {
        for n in &self.notes {
            println!("    {n}");
        }
        println!("{} criterion {}: {}", if self.ok { "PASS" } else { "FAIL" }, self.id, self.title);
        self.ok
    }
}

/// `|estimate - target| <= 3 sigma`, with sigma floored at the target's own
/// Bernoulli spread so that zero-variance estimates are not over-trusted.
pub fn within_3sigma(row: &EstimateRow, target: f64, trials: u64) -> bool {
    let sigma = row.stderr.max(bernoulli_stderr(target, trials));
    (row.estimate - target).abs() <= 3.0 * sigma
}

/// Permutations of `0..m` placing marked modes `0..u` into slots `0..n`,
/// counted by enumerating every permutation.
pub fn enumerate_placements(u: usize, n: usize, m: usize) -> (u128, u128) {
    fn rec(pos: usize, used: &mut [bool], img: &mut Vec<usize>, u: usize, n: usize, hits: &mut u128, total: &mut u128) {
        let m = used.len();
        if pos == m {
            *total += 1;
            if img[..u].iter().all(|&s| s < n) {
                *hits += 1;
            }
            return;
        }
        for s in 0..m {
            if !used[s] {
                used[s] = true;
                img.push(s);
                rec(pos + 1, used, img, u, n, hits, total);
                img.pop();
                used[s] = false;
            }
        }
    }
    let (mut hits, mut total) = (0, 0);
    rec(0, &mut vec![false; m], &mut Vec::new(), u, n, &mut hits, &mut total);
    (hits, total)
}
