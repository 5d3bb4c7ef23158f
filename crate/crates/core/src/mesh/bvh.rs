//! Bounding-volume hierarchy over mesh triangles: nearest ray hit and
//! closest-point queries.
//!
//! Built once per mesh with a binned SAH split and read-only afterwards, so a
//! single `Bvh` can be shared across rendering threads.

use super::{closest_point_on_triangle, ray_triangle, TriMesh, Vec3};

const LEAF_SIZE: usize = 4;
const BINS: usize = 12;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.min = self.min.inf(&o.min);
        self.max = self.max.sup(&o.max);
    }

    fn area(&self) -> f64 {
        let d = self.max - self.min;
        if d.x < 0.0 {
            return 0.0;
        }
        2.0 * (d.x * d.y + d.y * d.z + d.z * d.x)
    }

    /// Slab test; returns the entry distance if the ray hits before `t_max`.
    #[inline]
    fn hit(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            // NaN (0 * inf) on a slab boundary leaves the interval unchanged.
            if lo > t0 {
                t0 = lo;
            }
            if hi < t1 {
                t1 = hi;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }

    #[inline]
    fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: first primitive index; interior: index of the left child (the
    /// right child follows the whole left subtree, stored in `right`).
    start: usize,
    count: usize,
    right: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub distance: f64,
    pub face: usize,
    pub point: Vec3,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    tris: Vec<[Vec3; 3]>,
    face_ids: Vec<usize>,
}

impl Bvh {
    pub fn new(mesh: &TriMesh) -> Self {
        let n = mesh.faces.len();
        let mut face_ids: Vec<usize> = (0..n).collect();
        let centroids: Vec<Vec3> = (0..n).map(|f| mesh.face_centroid(f)).collect();
        let boxes: Vec<Aabb> = (0..n)
            .map(|f| {
                let mut b = Aabb::empty();
                for v in mesh.triangle(f) {
                    b.grow(&v);
                }
                b
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * n.max(1));
        if n > 0 {
            build(&mut nodes, &mut face_ids, 0, n, &centroids, &boxes);
        }
        let tris = face_ids.iter().map(|&f| mesh.triangle(f)).collect();
        Self {
            nodes,
            tris,
            face_ids,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Nearest hit along `origin + t·dir`, `t > 0`. Ties go to the lower
    /// face index.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        self.intersect_within(origin, dir, f64::INFINITY)
    }

    pub fn intersect_within(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut limit = t_max;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.hit(origin, &inv, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                for i in node.start..node.start + node.count {
                    let [a, b, c] = &self.tris[i];
                    if let Some(t) = ray_triangle(origin, dir, a, b, c) {
                        let face = self.face_ids[i];
                        let better = match best {
                            None => t <= limit,
                            Some(h) => t < h.t || (t == h.t && face < h.face),
                        };
                        if better {
                            best = Some(RayHit { t, face });
                            limit = t;
                        }
                    }
                }
            } else {
                let (l, r) = (ni + 1, node.right);
                let dl = self.nodes[l].bounds.hit(origin, &inv, limit);
                let dr = self.nodes[r].bounds.hit(origin, &inv, limit);
                match (dl, dr) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            stack.push(r);
                            stack.push(l);
                        } else {
                            stack.push(l);
                            stack.push(r);
                        }
                    }
                    (Some(_), None) => stack.push(l),
                    (None, Some(_)) => stack.push(r),
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// Closest point on the mesh surface to `p`.
    pub fn closest(&self, p: &Vec3) -> Option<ClosestHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best_sq = f64::INFINITY;
        let mut best: Option<(usize, Vec3)> = None;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.distance_sq(p) > best_sq {
                continue;
            }
            if node.count > 0 {
                for i in node.start..node.start + node.count {
                    let [a, b, c] = &self.tris[i];
                    let q = closest_point_on_triangle(p, a, b, c);
                    let d = (q - p).norm_squared();
                    let face = self.face_ids[i];
                    let better = match best {
                        None => true,
                        Some((bf, _)) => d < best_sq || (d == best_sq && face < bf),
                    };
                    if better {
                        best_sq = d;
                        best = Some((face, q));
                    }
                }
            } else {
                let (l, r) = (ni + 1, node.right);
                let dl = self.nodes[l].bounds.distance_sq(p);
                let dr = self.nodes[r].bounds.distance_sq(p);
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best.map(|(face, point)| ClosestHit {
            distance: best_sq.sqrt(),
            face,
            point,
        })
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        self.closest(p).map_or(f64::INFINITY, |h| h.distance)
    }
}

fn build(
    nodes: &mut Vec<Node>,
    ids: &mut [usize],
    offset: usize,
    len: usize,
    centroids: &[Vec3],
    boxes: &[Aabb],
) -> usize {
    let slice = &mut ids[offset..offset + len];
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &f in slice.iter() {
        bounds.merge(&boxes[f]);
        cbounds.grow(&centroids[f]);
    }
    let index = nodes.len();
    nodes.push(Node {
        bounds,
        start: offset,
        count: len,
        right: 0,
    });
    if len <= LEAF_SIZE {
        return index;
    }

    let extent = cbounds.max - cbounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let split = if extent[axis] <= 0.0 {
        len / 2
    } else {
        sah_partition(slice, axis, &cbounds, centroids, boxes)
    };

    let left = build(nodes, ids, offset, split, centroids, boxes);
    debug_assert_eq!(left, index + 1);
    let right = build(nodes, ids, offset + split, len - split, centroids, boxes);
    let node = &mut nodes[index];
    node.count = 0;
    node.right = right;
    index
}

/// Binned SAH along `axis`; partitions `slice` in place and returns the
/// size of the left part (never 0 or `len`).
fn sah_partition(
    slice: &mut [usize],
    axis: usize,
    cbounds: &Aabb,
    centroids: &[Vec3],
    boxes: &[Aabb],
) -> usize {
    let lo = cbounds.min[axis];
    let scale = BINS as f64 / (cbounds.max[axis] - lo);
    let bin_of = |f: usize| (((centroids[f][axis] - lo) * scale) as usize).min(BINS - 1);
    let mut counts = [0usize; BINS];
    let mut bbs = [Aabb::empty(); BINS];
    for &f in slice.iter() {
        let b = bin_of(f);
        counts[b] += 1;
        bbs[b].merge(&boxes[f]);
    }
    let mut best_cost = f64::INFINITY;
    let mut best_bin = BINS / 2;
    for s in 1..BINS {
        let (mut lb, mut rb) = (Aabb::empty(), Aabb::empty());
        let (mut lc, mut rc) = (0, 0);
        for b in 0..s {
            lb.merge(&bbs[b]);
            lc += counts[b];
        }
        for b in s..BINS {
            rb.merge(&bbs[b]);
            rc += counts[b];
        }
        if lc == 0 || rc == 0 {
            continue;
        }
        let cost = lb.area() * lc as f64 + rb.area() * rc as f64;
        if cost < best_cost {
            best_cost = cost;
            best_bin = s;
        }
    }
    let mut i = 0;
    for j in 0..slice.len() {
        if bin_of(slice[j]) < best_bin {
            slice.swap(i, j);
            i += 1;
        }
    }
    if i == 0 || i == slice.len() {
        // All centroids landed in one bin: fall back to a median split.
        slice.sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        return slice.len() / 2;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_room, brute_force_distance, icosphere};

    #[test]
    fn ray_hits_box_wall() {
        let m = box_room(Vec3::new(-2.0, -2.0, 0.0), Vec3::new(2.0, 2.0, 3.0));
        let bvh = Bvh::new(&m);
        let hit = bvh
            .intersect(&Vec3::new(0.0, 0.0, 1.5), &Vec3::new(1.0, 0.0, 0.0))
            .unwrap();
        assert!((hit.t - 2.0).abs() < 1e-12);
        assert!(bvh
            .intersect_within(&Vec3::new(0.0, 0.0, 1.5), &Vec3::new(1.0, 0.0, 0.0), 1.0)
            .is_none());
    }

    #[test]
    fn empty_mesh_queries() {
        let bvh = Bvh::new(&TriMesh::empty());
        assert!(bvh.intersect(&Vec3::zeros(), &Vec3::x()).is_none());
        assert!(bvh.closest(&Vec3::zeros()).is_none());
    }

    #[test]
    fn closest_matches_brute_force_on_sphere() {
        let m = icosphere(Vec3::new(0.1, 0.2, 0.3), 1.3, 2);
        let bvh = Bvh::new(&m);
        for i in 0..200 {
            let t = i as f64 * 0.37;
            let p = Vec3::new(t.sin() * 2.0, (t * 1.3).cos() * 1.5, (t * 0.7).sin());
            let d = bvh.distance(&p);
            assert!((d - brute_force_distance(&p, &m)).abs() < 1e-12);
        }
    }
}
