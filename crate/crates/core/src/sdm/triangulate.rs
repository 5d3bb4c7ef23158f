//! Ear-clipping triangulation of simple 2D polygons, with holes joined to
//! the outer ring by bridge edges.
//!
//! Output triangles index into the caller's vertex list and keep the
//! winding of the input ring, whichever way it runs.

pub type P2 = [f64; 2];

#[inline]
fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

pub fn signed_area(pts: &[P2], ring: &[usize]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let a = pts[ring[i]];
            let b = pts[ring[(i + 1) % n]];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Triangulate the ring `ring` (indices into `pts`).
pub fn triangulate(pts: &[P2], ring: &[usize]) -> Vec<[usize; 3]> {
    triangulate_with_holes(pts, ring, &[])
}

/// Triangulate `outer` minus `holes`. Hole rings may run either way.
pub fn triangulate_with_holes(pts: &[P2], outer: &[usize], holes: &[Vec<usize>]) -> Vec<[usize; 3]> {
    if outer.len() < 3 {
        return Vec::new();
    }
    let reversed = signed_area(pts, outer) < 0.0;
    let mut ring: Vec<usize> = outer.to_vec();
    if reversed {
        ring.reverse();
    }
    let scale = ring
        .iter()
        .map(|&i| pts[i][0].abs().max(pts[i][1].abs()))
        .fold(0.0f64, f64::max)
        .max(1e-300);

    // Bridge holes, rightmost first.
    let mut hs: Vec<Vec<usize>> = holes
        .iter()
        .filter(|h| h.len() >= 3)
        .map(|h| {
            let mut h = h.clone();
            if signed_area(pts, &h) > 0.0 {
                h.reverse();
            }
            h
        })
        .collect();
    hs.sort_by(|a, b| {
        let ma = a.iter().map(|&i| pts[i][0]).fold(f64::NEG_INFINITY, f64::max);
        let mb = b.iter().map(|&i| pts[i][0]).fold(f64::NEG_INFINITY, f64::max);
        mb.total_cmp(&ma)
    });
    for h in &hs {
        bridge_hole(pts, &mut ring, h);
    }

    let mut tris = ear_clip(pts, ring, scale);
    if reversed {
        for t in &mut tris {
            t.swap(1, 2);
        }
    }
    tris
}

/// Splice the (clockwise) hole into the counter-clockwise outer ring.
fn bridge_hole(pts: &[P2], ring: &mut Vec<usize>, hole: &[usize]) {
    // Rightmost hole vertex (ties: lowest y, then lowest index).
    let (hi, &m) = hole
        .iter()
        .enumerate()
        .max_by(|(_, &a), (_, &b)| {
            pts[a][0]
                .total_cmp(&pts[b][0])
                .then(pts[b][1].total_cmp(&pts[a][1]))
                .then(b.cmp(&a))
        })
        .unwrap();
    let mp = pts[m];

    // Closest intersection of the +x ray from M with the outer ring.
    let n = ring.len();
    let mut best_x = f64::INFINITY;
    let mut best_edge = None;
    for i in 0..n {
        let a = pts[ring[i]];
        let b = pts[ring[(i + 1) % n]];
        if (a[1] > mp[1]) == (b[1] > mp[1]) {
            if a[1] == mp[1] && a[0] >= mp[0] && a[0] < best_x {
                best_x = a[0];
                best_edge = Some((i, i));
            }
            continue;
        }
        let t = (mp[1] - a[1]) / (b[1] - a[1]);
        let x = a[0] + t * (b[0] - a[0]);
        if x >= mp[0] && x < best_x {
            best_x = x;
            best_edge = Some((i, (i + 1) % n));
        }
    }
    let Some((ea, eb)) = best_edge else {
        log::warn!("hole bridging failed: no visible outer edge");
        return;
    };
    let ip = [best_x, mp[1]];
    // Candidate P: edge endpoint with the larger x.
    let mut pick = if pts[ring[ea]][0] >= pts[ring[eb]][0] { ea } else { eb };
    if pts[ring[pick]] != ip {
        // Reflex vertices inside triangle (M, I, P) can block the bridge.
        let p = pts[ring[pick]];
        let (t0, t1, t2) = if cross(mp, ip, p) >= 0.0 { (mp, ip, p) } else { (mp, p, ip) };
        let mut best: Option<(f64, f64, usize)> = None;
        for j in 0..n {
            if j == pick {
                continue;
            }
            let q = pts[ring[j]];
            let prev = pts[ring[(j + n - 1) % n]];
            let next = pts[ring[(j + 1) % n]];
            let reflex = cross(prev, q, next) <= 0.0;
            if !reflex {
                continue;
            }
            if cross(t0, t1, q) >= 0.0 && cross(t1, t2, q) >= 0.0 && cross(t2, t0, q) >= 0.0 {
                let dx = q[0] - mp[0];
                let dy = q[1] - mp[1];
                let angle = dy.abs().atan2(dx);
                let dist = dx * dx + dy * dy;
                if best.is_none_or(|(ba, bd, _)| angle < ba || (angle == ba && dist < bd)) {
                    best = Some((angle, dist, j));
                }
            }
        }
        if let Some((_, _, j)) = best {
            pick = j;
        }
    }

    let mut spliced = Vec::with_capacity(ring.len() + hole.len() + 2);
    spliced.extend_from_slice(&ring[..=pick]);
    for k in 0..=hole.len() {
        spliced.push(hole[(hi + k) % hole.len()]);
    }
    spliced.push(ring[pick]);
    spliced.extend_from_slice(&ring[pick + 1..]);
    *ring = spliced;
}

fn ear_clip(pts: &[P2], mut ring: Vec<usize>, scale: f64) -> Vec<[usize; 3]> {
    let eps = 1e-14 * scale * scale;
    let mut tris = Vec::with_capacity(ring.len().saturating_sub(2));
    while ring.len() > 3 {
        let n = ring.len();
        let is_ear = |i: usize| -> bool {
            let (ia, ib, ic) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            if cross(a, b, c) <= eps {
                return false;
            }
            ring.iter().all(|&j| {
                let q = pts[j];
                if q == a || q == b || q == c {
                    return true;
                }
                // Points on the triangle boundary also block the ear.
                !(cross(a, b, q) >= -eps && cross(b, c, q) >= -eps && cross(c, a, q) >= -eps)
            })
        };
        let ear = (0..n).find(|&i| is_ear(i)).or_else(|| {
            // Numerically stuck: clip the most convex corner.
            (0..n).max_by(|&i, &j| {
                let ci = cross(pts[ring[(i + n - 1) % n]], pts[ring[i]], pts[ring[(i + 1) % n]]);
                let cj = cross(pts[ring[(j + n - 1) % n]], pts[ring[j]], pts[ring[(j + 1) % n]]);
                ci.total_cmp(&cj).then(j.cmp(&i))
            })
        });
        let i = ear.unwrap();
        let t = [ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]];
        if cross(pts[t[0]], pts[t[1]], pts[t[2]]).abs() > eps {
            tris.push(t);
        }
        ring.remove(i);
    }
    if ring.len() == 3 && cross(pts[ring[0]], pts[ring[1]], pts[ring[2]]).abs() > eps {
        tris.push([ring[0], ring[1], ring[2]]);
    }
    tris
}
