//! Thin-curve utilities: morphological thinning, spur pruning, and tracing
//! 8-connected pixel curves into ordered polylines.

use crate::raster::{Grid, Mask, NEIGHBORS_4, NEIGHBORS_8};

/// Clockwise ring starting north: N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

fn ring_bits(mask: &Mask, y: usize, x: usize) -> [bool; 8] {
    RING.map(|(dy, dx)| mask.at(y as isize + dy, x as isize + dx) == Some(&true))
}

pub fn degree(mask: &Mask, y: usize, x: usize) -> usize {
    NEIGHBORS_8
        .iter()
        .filter(|(dy, dx)| mask.at(y as isize + dy, x as isize + dx) == Some(&true))
        .count()
}

/// Zhang–Suen thinning to an 8-connected, one-pixel-wide skeleton.
pub fn zhang_suen(mask: &Mask) -> Mask {
    let (h, w) = mask.dims();
    let mut img = mask.clone();
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            marked.clear();
            for y in 0..h {
                for x in 0..w {
                    if !*img.get(y, x) {
                        continue;
                    }
                    let p = ring_bits(&img, y, x);
                    let b = p.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    // p[0]=N, p[2]=E, p[4]=S, p[6]=W
                    let ok = if pass == 0 {
                        !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6])
                    } else {
                        !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6])
                    };
                    if ok {
                        marked.push((y, x));
                    }
                }
            }
            for &(y, x) in &marked {
                img.set(y, x, false);
            }
            changed |= !marked.is_empty();
        }
        if !changed {
            break;
        }
    }
    remove_staircase(&mut img);
    img
}

/// Drops corner pixels whose neighbors stay 8-connected without them, so that
/// interior curve pixels have exactly two neighbors.
pub fn remove_staircase(mask: &mut Mask) {
    let (h, w) = mask.dims();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(y, x) {
                continue;
            }
            let p = ring_bits(mask, y, x);
            // Corner pixels: exactly two orthogonal 4-neighbors.
            let four: Vec<usize> = (0..4).map(|k| 2 * k).filter(|&i| p[i]).collect();
            let corner = four.len() == 2 && (four[1] - four[0]) % 4 == 2;
            if corner && ring_connected(&p) {
                mask.set(y, x, false);
            }
        }
    }
}

/// Whether the set neighbors stay 8-connected to each other without the center.
fn ring_connected(p: &[bool; 8]) -> bool {
    let set: Vec<usize> = (0..8).filter(|&i| p[i]).collect();
    if set.len() <= 1 {
        return true;
    }
    let adjacent = |a: usize, b: usize| {
        let (ay, ax) = RING[a];
        let (by, bx) = RING[b];
        (ay - by).abs() <= 1 && (ax - bx).abs() <= 1
    };
    let mut reached = vec![set[0]];
    let mut frontier = vec![set[0]];
    while let Some(c) = frontier.pop() {
        for &n in &set {
            if !reached.contains(&n) && adjacent(c, n) {
                reached.push(n);
                frontier.push(n);
            }
        }
    }
    reached.len() == set.len()
}

/// Removes branches shorter than `min_len` pixels that hang off a junction.
/// Isolated curves are left alone regardless of length.
pub fn prune_spurs(mask: &mut Mask, min_len: usize) {
    let (h, w) = mask.dims();
    for _ in 0..3 {
        let mut changed = false;
        let endpoints: Vec<(usize, usize)> = mask
            .indexed()
            .filter(|(y, x, v)| **v && degree(mask, *y, *x) == 1)
            .map(|(y, x, _)| (y, x))
            .collect();
        for (ey, ex) in endpoints {
            if !*mask.get(ey, ex) || degree(mask, ey, ex) != 1 {
                continue;
            }
            let mut path = vec![(ey, ex)];
            let mut visited = Grid::new(h, w, false);
            visited.set(ey, ex, true);
            let mut cur = (ey, ex);
            let mut hit_junction = false;
            loop {
                let next: Vec<(usize, usize)> = NEIGHBORS_8
                    .iter()
                    .filter_map(|(dy, dx)| {
                        let (ny, nx) = (cur.0 as isize + dy, cur.1 as isize + dx);
                        (mask.at(ny, nx) == Some(&true) && !*visited.get(ny as usize, nx as usize))
                            .then_some((ny as usize, nx as usize))
                    })
                    .collect();
                if next.is_empty() {
                    break;
                }
                let n = next[0];
                if next.len() > 1 || degree(mask, n.0, n.1) >= 3 {
                    hit_junction = true;
                    // A spur tip touching the curve through a pixel that is
                    // not needed for the curve's connectivity takes it along.
                    if next.len() == 1 {
                        let mut ring = ring_bits(mask, n.0, n.1);
                        for (i, (dy, dx)) in RING.iter().enumerate() {
                            if (n.0 as isize + dy, n.1 as isize + dx)
                                == (cur.0 as isize, cur.1 as isize)
                            {
                                ring[i] = false;
                            }
                        }
                        if ring_connected(&ring) {
                            path.push(n);
                        }
                    }
                    break;
                }
                visited.set(n.0, n.1, true);
                path.push(n);
                cur = n;
                if path.len() >= min_len {
                    break;
                }
            }
            if hit_junction && path.len() < min_len {
                for (y, x) in path {
                    mask.set(y, x, false);
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Decomposes a thin pixel set into ordered chains of 8-adjacent pixels.
///
/// Chains start at endpoints where possible; closed loops are closed by
/// repeating the first pixel. Returned coordinates are `(y, x)`.
pub fn trace_chains(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    let mut left = mask.clone();
    let mut chains = Vec::new();
    loop {
        let mut start = None;
        let mut fallback = None;
        for (y, x, v) in left.indexed() {
            if !*v {
                continue;
            }
            if fallback.is_none() {
                fallback = Some((y, x));
            }
            if degree(&left, y, x) <= 1 {
                start = Some((y, x));
                break;
            }
        }
        let Some(start) = start.or(fallback) else {
            break;
        };
        let mut chain = vec![start];
        left.set(start.0, start.1, false);
        let mut cur = start;
        loop {
            let step = NEIGHBORS_4
                .iter()
                .chain(NEIGHBORS_8.iter().filter(|(dy, dx)| *dy != 0 && *dx != 0))
                .map(|(dy, dx)| (cur.0 as isize + dy, cur.1 as isize + dx))
                .find(|&(ny, nx)| left.at(ny, nx) == Some(&true));
            match step {
                Some((ny, nx)) => {
                    cur = (ny as usize, nx as usize);
                    left.set(cur.0, cur.1, false);
                    chain.push(cur);
                }
                None => break,
            }
        }
        if chain.len() > 2 {
            let (a, b) = (chain[0], *chain.last().unwrap());
            if a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 && degree(mask, a.0, a.1) >= 2 {
                chain.push(a);
            }
        }
        chains.push(chain);
    }
    chains
}

/// Length of a pixel chain in pixels.
pub fn chain_length(chain: &[(usize, usize)]) -> f64 {
    chain
        .windows(2)
        .map(|p| {
            let dy = p[1].0 as f64 - p[0].0 as f64;
            let dx = p[1].1 as f64 - p[0].1 as f64;
            (dy * dy + dx * dx).sqrt()
        })
        .sum()
}

/// Chain as `[x, y]` stroke points.
pub fn chain_points(chain: &[(usize, usize)]) -> Vec<[f32; 2]> {
    let mut pts: Vec<[f32; 2]> = chain.iter().map(|&(y, x)| [x as f32, y as f32]).collect();
    if pts.len() == 1 {
        pts.push(pts[0]);
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_a_bar_gives_a_centered_line() {
        let mask = Grid::from_fn(20, 60, |y, x| (5..12).contains(&y) && (5..55).contains(&x));
        let mut skel = zhang_suen(&mask);
        prune_spurs(&mut skel, 5);
        let chains = trace_chains(&skel);
        assert_eq!(chains.len(), 1);
        for &(y, _) in &chains[0] {
            assert!((y as f64 - 8.0).abs() <= 1.0);
        }
    }

    #[test]
    fn traces_an_l_shape_in_order() {
        let mut mask = Grid::new(10, 10, false);
        for x in 1..8 {
            mask.set(2, x, true);
        }
        for y in 3..8 {
            mask.set(y, 7, true);
        }
        let chains = trace_chains(&mask);
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].len(), 12);
        for w in chains[0].windows(2) {
            assert!(w[0].0.abs_diff(w[1].0) <= 1 && w[0].1.abs_diff(w[1].1) <= 1);
        }
    }

    #[test]
    fn short_spur_is_removed() {
        let mut mask = Grid::new(20, 40, false);
        for x in 2..38 {
            mask.set(10, x, true);
        }
        for y in 7..10 {
            mask.set(y, 20, true);
        }
        prune_spurs(&mut mask, 5);
        assert_eq!(mask.count(), 36);
    }

    #[test]
    fn closed_loop_is_closed() {
        let mut mask = Grid::new(10, 10, false);
        for i in 2..7 {
            mask.set(2, i, true);
            mask.set(6, i, true);
            mask.set(i, 2, true);
            mask.set(i, 6, true);
        }
        let chains = trace_chains(&mask);
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].first(), chains[0].last());
    }
}
