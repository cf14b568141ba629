use super::features::{similarity_matrix, SimilarityMatrix};
use super::icp::{icp_4dof, IcpConfig};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Transform4Dof};
use crate::io::format_sig9;
use crate::shape_dist::SDConfig;

/// One step of the agglomerative merge.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeRecord {
    /// Object of the surviving set used as the ICP target.
    pub anchor: usize,
    /// Object of the merged-in set used as the ICP source.
    pub moved: usize,
    /// Similarity-matrix entry of the `(anchor, moved)` pair.
    pub distance: f64,
    /// Final trimmed RMS of the pairwise ICP.
    pub rms: f64,
    /// Every object whose transform was updated, ascending.
    pub moved_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAlignment {
    /// Maps object `i` into the common frame.
    pub transforms: Vec<Transform4Dof>,
    pub merges: Vec<MergeRecord>,
}

impl GroupAlignment {
    /// `object_id,tx,ty,tz,theta`
    pub fn transforms_csv(&self) -> String {
        let mut out = String::from("object_id,tx,ty,tz,theta\n");
        for (i, t) in self.transforms.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{},{}\n",
                format_sig9(t.tx),
                format_sig9(t.ty),
                format_sig9(t.tz),
                format_sig9(t.theta())
            ));
        }
        out
    }

    /// `step,anchor,moved,distance,rms,moved_objects` with the moved objects
    /// separated by `;`.
    pub fn merges_csv(&self) -> String {
        let mut out = String::from("step,anchor,moved,distance,rms,moved_objects\n");
        for (k, m) in self.merges.iter().enumerate() {
            let set: Vec<String> = m.moved_set.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!(
                "{k},{},{},{},{},{}\n",
                m.anchor,
                m.moved,
                format_sig9(m.distance),
                format_sig9(m.rms),
                set.join(";")
            ));
        }
        out
    }

    /// All objects moved into the common frame and concatenated.
    pub fn merged_cloud(&self, objects: &[PointCloud]) -> Result<PointCloud> {
        let pts = objects
            .iter()
            .zip(&self.transforms)
            .flat_map(|(c, t)| c.points().iter().map(move |p| t.apply(p)))
            .collect();
        PointCloud::new(pts)
    }
}

pub fn align_group(objects: &[PointCloud], icp: &IcpConfig, sd: &SDConfig) -> Result<GroupAlignment> {
    if objects.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: objects.len(),
        });
    }
    let sim = similarity_matrix(objects, sd)?;
    align_group_with_similarity(objects, &sim, icp)
}

/// Single-linkage agglomeration over a fixed similarity matrix. Each merge
/// aligns the closest cross-set object pair with ICP and moves the smaller
/// set (on equal sizes, the set of the higher-index object) onto the other.
pub fn align_group_with_similarity(
    objects: &[PointCloud],
    sim: &SimilarityMatrix,
    icp: &IcpConfig,
) -> Result<GroupAlignment> {
    let n = objects.len();
    if sim.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sim.len(),
        });
    }
    icp.validate()?;
    let mut set_of: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut transforms = vec![Transform4Dof::identity(); n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for _ in 1..n {
        // the globally closest cross-set pair is both the single-linkage set
        // pair and the most similar object pair within it; strict comparison
        // keeps the lowest (i, j) on ties
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in i + 1..n {
                if set_of[i] != set_of[j] && best.is_none_or(|b| sim.get(i, j) < b.2) {
                    best = Some((i, j, sim.get(i, j)));
                }
            }
        }
        let (i, j, distance) = best.expect("at least two sets remain");
        let (anchor, moved) = if members[set_of[i]].len() < members[set_of[j]].len() {
            (j, i)
        } else {
            (i, j)
        };
        let source = objects[moved].transformed(&transforms[moved]);
        let target = objects[anchor].transformed(&transforms[anchor]);
        let result = icp_4dof(&source, &target, icp).map_err(|e| Error::AlignmentAborted {
            merges: merges.clone(),
            source: Box::new(e),
        })?;

        let (keep, gone) = (set_of[anchor], set_of[moved]);
        let mut moved_set = std::mem::take(&mut members[gone]);
        moved_set.sort_unstable();
        for &k in &moved_set {
            transforms[k] = transforms[k].then(&result.transform);
            set_of[k] = keep;
        }
        members[keep].extend_from_slice(&moved_set);
        merges.push(MergeRecord {
            anchor,
            moved,
            distance,
            rms: result.rms,
            moved_set,
        });
    }
    Ok(GroupAlignment { transforms, merges })
}
