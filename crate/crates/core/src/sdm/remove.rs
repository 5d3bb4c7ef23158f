use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mesh::{boundary_edges, FaceLabel, TriMesh};

/// Output of [`remove_furniture_faces`].
#[derive(Debug, Clone)]
pub struct Removal {
    pub mesh: TriMesh,
    /// Removed face IDs of the input mesh.
    pub removed: Vec<usize>,
    /// Input face ID of every kept face, in output order.
    pub kept_from: Vec<usize>,
    /// Holes opened by the removal, as vertex loops of the output mesh.
    /// Loops run counter-clockwise seen from the side the surrounding face
    /// normals point to, which is the winding a fill patch needs.
    pub loops: Vec<Vec<usize>>,
}

pub fn remove_furniture_faces(mesh: &TriMesh, labels: &[FaceLabel]) -> Result<Removal> {
    if labels.len() != mesh.faces.len() {
        return Err(Error::MismatchedInput(format!(
            "{} labels for {} faces",
            labels.len(),
            mesh.faces.len()
        )));
    }
    let keep: Vec<bool> = labels.iter().map(|&l| l != FaceLabel::Furniture).collect();
    let removed: Vec<usize> = (0..labels.len()).filter(|&f| !keep[f]).collect();
    let kept_from: Vec<usize> = (0..labels.len()).filter(|&f| keep[f]).collect();

    // Edges that bordered a removed face: only loops through these are new.
    let mut opened: BTreeSet<(usize, usize)> = BTreeSet::new();
    if !removed.is_empty() {
        let mut incident: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        for (fi, f) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let e = incident.entry((a.min(b), a.max(b))).or_default();
                if keep[fi] {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        opened = incident
            .into_iter()
            .filter(|(_, (k, r))| *k > 0 && *r > 0)
            .map(|(e, _)| e)
            .collect();
    }

    let mut out = mesh.clone();
    let remap = out.retain_faces(&keep);
    let opened: BTreeSet<(usize, usize)> = opened
        .into_iter()
        .filter_map(|(a, b)| {
            let (a, b) = (remap[a]?, remap[b]?);
            Some((a.min(b), a.max(b)))
        })
        .collect();

    let loops = if opened.is_empty() {
        Vec::new()
    } else {
        boundary_loops(&out)
            .into_iter()
            .filter(|l| {
                (0..l.len()).any(|i| {
                    let (a, b) = (l[i], l[(i + 1) % l.len()]);
                    opened.contains(&(a.min(b), a.max(b)))
                })
            })
            .collect()
    };
    Ok(Removal {
        mesh: out,
        removed,
        kept_from,
        loops,
    })
}

/// All boundary loops of `mesh` in fill orientation (reverse of the
/// boundary half-edges), each rotated to start at its lowest vertex.
pub fn boundary_loops(mesh: &TriMesh) -> Vec<Vec<usize>> {
    // Fill orientation walks b → a for every boundary half-edge a → b.
    let mut next: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (a, b) in boundary_edges(mesh) {
        next.entry(b).or_default().push(a);
    }
    for v in next.values_mut() {
        v.sort_unstable();
    }
    let mut loops = Vec::new();
    while let Some((&start, _)) = next.iter().find(|(_, v)| !v.is_empty()) {
        let mut lp = vec![start];
        let mut cur = start;
        loop {
            let Some(outs) = next.get_mut(&cur) else { break };
            if outs.is_empty() {
                break;
            }
            let nxt = outs.remove(0);
            if nxt == start {
                break;
            }
            // Pinch vertex visited twice: split off the inner cycle.
            if let Some(pos) = lp.iter().position(|&v| v == nxt) {
                let inner: Vec<usize> = lp.split_off(pos + 1);
                let mut cycle = vec![nxt];
                cycle.extend(inner);
                if cycle.len() >= 3 {
                    loops.push(rotate_to_min(cycle));
                }
                cur = nxt;
                continue;
            }
            lp.push(nxt);
            cur = nxt;
        }
        if lp.len() >= 3 {
            loops.push(rotate_to_min(lp));
        }
    }
    loops.sort();
    loops
}

fn rotate_to_min(mut lp: Vec<usize>) -> Vec<usize> {
    let pos = lp
        .iter()
        .enumerate()
        .min_by_key(|(_, &v)| v)
        .map(|(i, _)| i)
        .unwrap_or(0);
    lp.rotate_left(pos);
    lp
}
