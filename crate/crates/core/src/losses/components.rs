use std::collections::VecDeque;

/// Exact 4-connected flood fill. Labels are 0 for void cells and `1..=k`
/// for the `k` components, numbered in row-major order of first appearance.
pub fn connected_components(solid: &[bool], w: usize, h: usize) -> (Vec<u32>, usize) {
    assert_eq!(solid.len(), w * h, "map size");
    let mut labels = vec![0u32; w * h];
    let mut k = 0;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !solid[start] || labels[start] != 0 {
            continue;
        }
        k += 1;
        labels[start] = k as u32;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            for n in neighbors(c, w, h).into_iter().flatten() {
                if solid[n] && labels[n] == 0 {
                    labels[n] = k as u32;
                    queue.push_back(n);
                }
            }
        }
    }
    (labels, k)
}

fn neighbors(c: usize, w: usize, h: usize) -> [Option<usize>; 4] {
    let (x, y) = (c % w, c / w);
    [
        (x > 0).then(|| c - 1),
        (x + 1 < w).then(|| c + 1),
        (y > 0).then(|| c - w),
        (y + 1 < h).then(|| c + w),
    ]
}

/// Gated max-propagation labeling: each cell at or above `threshold` starts
/// with its own index, then repeatedly takes the largest label among itself
/// and its at-threshold 4-neighbors until nothing changes. Returns labels
/// (`None` below threshold) and the number of sweeps run.
///
/// Synchronous sweeps converge in at most the longest in-component geodesic
/// distance, which can exceed any fixed multiple of the grid side for
/// winding shapes, so sweeps run to the fixed point.
pub fn propagate_labels(
    density: &[f64],
    w: usize,
    h: usize,
    threshold: f64,
) -> (Vec<Option<usize>>, usize) {
    assert_eq!(density.len(), w * h, "map size");
    let solid: Vec<bool> = density.iter().map(|&v| v >= threshold).collect();
    let mut cur: Vec<Option<usize>> = (0..w * h).map(|i| solid[i].then_some(i)).collect();
    let mut next = cur.clone();
    let mut sweeps = 0;
    loop {
        let mut changed = false;
        for c in 0..w * h {
            let Some(mut best) = cur[c] else { continue };
            for n in neighbors(c, w, h).into_iter().flatten() {
                if let Some(l) = cur[n] {
                    best = best.max(l);
                }
            }
            changed |= Some(best) != cur[c];
            next[c] = Some(best);
        }
        sweeps += 1;
        std::mem::swap(&mut cur, &mut next);
        if !changed {
            return (cur, sweeps);
        }
    }
}

/// Fraction of above-threshold soft mass lying outside the component that
/// holds element `load`, with its gradient with respect to `density`.
/// All-void maps and maps whose load element is void score 1.
pub fn floating_fraction(
    density: &[f64],
    w: usize,
    h: usize,
    load: usize,
    threshold: f64,
) -> (f64, Vec<f64>) {
    let (labels, _) = propagate_labels(density, w, h, threshold);
    let mut grad = vec![0.0; w * h];
    let total: f64 = labels
        .iter()
        .zip(density)
        .filter(|(l, _)| l.is_some())
        .map(|(_, v)| v)
        .sum();
    if total <= 0.0 {
        return (1.0, grad);
    }
    let Some(anchor) = labels[load] else {
        return (1.0, grad);
    };
    let floating: f64 = labels
        .iter()
        .zip(density)
        .filter(|(l, _)| matches!(l, Some(x) if *x != anchor))
        .map(|(_, v)| v)
        .sum();
    for (g, l) in grad.iter_mut().zip(&labels) {
        if let Some(l) = l {
            let f = if *l != anchor { 1.0 } else { 0.0 };
            *g = (f * total - floating) / (total * total);
        }
    }
    (floating / total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_and_diagonal() {
        let mut s = vec![false; 30];
        for y in 1..4 {
            for x in 1..5 {
                s[y * 6 + x] = true;
            }
        }
        assert_eq!(connected_components(&s, 6, 5).1, 1);
        let d = [true, false, false, true];
        assert_eq!(connected_components(&d, 2, 2).1, 2);
        assert_eq!(connected_components(&[false; 9], 3, 3).1, 0);
    }

    #[test]
    fn propagation_settles_on_a_spiral() {
        // A serpentine path longer than 2 * side.
        let n = 9;
        let mut d = vec![0.0; n * n];
        for y in (0..n).step_by(2) {
            for x in 0..n {
                d[y * n + x] = 1.0;
            }
            if y + 1 < n {
                let x = if (y / 2) % 2 == 0 { n - 1 } else { 0 };
                d[(y + 1) * n + x] = 1.0;
            }
        }
        let (labels, sweeps) = propagate_labels(&d, n, n, 0.5);
        assert!(sweeps > 2 * n);
        let first = labels[0].unwrap();
        assert!(labels
            .iter()
            .zip(&d)
            .all(|(l, &v)| (v >= 0.5) == (*l == Some(first))));
    }

    #[test]
    fn floating_fraction_cases() {
        let d = [0.75, 0.0, 0.75, 0.75, 0.0, 0.75];
        assert_eq!(floating_fraction(&d, 3, 2, 0, 0.5).0, 0.5);
        assert_eq!(floating_fraction(&[1.0; 6], 3, 2, 4, 0.5).0, 0.0);
        assert_eq!(floating_fraction(&[0.2; 6], 3, 2, 0, 0.5).0, 1.0);
        assert_eq!(floating_fraction(&d, 3, 2, 1, 0.5).0, 1.0);
    }
}
