use std::collections::BTreeMap;

use super::TriMesh;

/// Face → faces sharing an edge, each list sorted ascending.
pub type Adjacency = Vec<Vec<usize>>;

fn edge_map(mesh: &TriMesh) -> BTreeMap<(usize, usize), Vec<usize>> {
    let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default().push(fi);
        }
    }
    edges
}

pub fn face_adjacency(mesh: &TriMesh) -> Adjacency {
    let mut adj: Adjacency = vec![Vec::new(); mesh.faces.len()];
    let mut non_manifold = 0usize;
    for faces in edge_map(mesh).values() {
        if faces.len() > 2 {
            non_manifold += 1;
        }
        for &a in faces {
            for &b in faces {
                if a != b {
                    adj[a].push(b);
                }
            }
        }
    }
    if non_manifold > 0 {
        log::warn!("mesh has {non_manifold} non-manifold edges");
    }
    for n in &mut adj {
        n.sort_unstable();
        n.dedup();
    }
    adj
}

/// Directed boundary half-edges `(a, b)` as they appear in their single
/// incident face, in face order.
pub fn boundary_edges(mesh: &TriMesh) -> Vec<(usize, usize)> {
    let edges = edge_map(mesh);
    let mut out = Vec::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if edges[&(a.min(b), a.max(b))].len() == 1 {
                out.push((a, b));
            }
        }
    }
    out
}

pub fn boundary_edge_count(mesh: &TriMesh) -> usize {
    edge_map(mesh).values().filter(|f| f.len() == 1).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_room, Vec3};

    #[test]
    fn two_triangles_share_edge() {
        let v = vec![
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let m = TriMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let adj = face_adjacency(&m);
        assert_eq!(adj, vec![vec![1], vec![0]]);
        assert_eq!(boundary_edge_count(&m), 4);
    }

    #[test]
    fn closed_cube_has_three_neighbors() {
        let m = box_room(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
        let adj = face_adjacency(&m);
        assert!(adj.iter().all(|n| n.len() == 3));
        assert_eq!(boundary_edge_count(&m), 0);
        assert!(boundary_edges(&m).is_empty());
    }

    #[test]
    fn isolated_triangle() {
        let v = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let m = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(face_adjacency(&m)[0].is_empty());
        assert_eq!(boundary_edges(&m), vec![(0, 1), (1, 2), (2, 0)]);
    }
}
