use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::LabeledCloud;
use crate::error::{Error, Result};
use crate::votes::Tally;

#[derive(Default)]
struct Cell {
    sum: Vector3<f64>,
    normal_sum: Vector3<f64>,
    first_normal: Option<Vector3<f64>>,
    count: usize,
    labels: Tally<u32>,
}

/// One point per occupied voxel of edge `voxel`: member centroid, normalized
/// mean normal, and the members' majority top-1 label (0 abstains, ties to
/// the smaller id). Output is ordered by voxel coordinate.
pub fn downsample(cloud: &LabeledCloud, voxel: f64) -> Result<LabeledCloud> {
    if !(voxel > 0.0) || !voxel.is_finite() {
        return Err(Error::InvalidInput(format!("voxel size must be positive, got {voxel}")));
    }
    cloud.validate()?;
    let mut cells: BTreeMap<[i64; 3], Cell> = BTreeMap::new();
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let key = [0, 1, 2].map(|a| (p[a] / voxel).floor() as i64);
        let cell = cells.entry(key).or_default();
        cell.sum += p;
        cell.normal_sum += cloud.normals[i];
        cell.first_normal.get_or_insert(cloud.normals[i]);
        cell.count += 1;
        cell.labels.add(cloud.top1[i].id, 1);
    }
    let mut out = LabeledCloud {
        space: cloud.space.clone(),
        ..Default::default()
    };
    for cell in cells.into_values() {
        out.points.push(cell.sum / cell.count as f64);
        let normal = if cell.normal_sum.norm() >= 1e-9 {
            cell.normal_sum.normalize()
        } else {
            let first = cell.first_normal.unwrap_or_else(Vector3::z);
            if first.norm() >= 1e-9 {
                first.normalize()
            } else {
                Vector3::z()
            }
        };
        out.normals.push(normal);
        let (a, b) = cell.labels.top_two();
        out.top1.push(a);
        out.top2.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::votes::Vote;
    use std::collections::HashSet;

    fn cloud(points: Vec<Vector3<f64>>) -> LabeledCloud {
        let n = points.len();
        LabeledCloud::from_geometry(points, vec![Vector3::z(); n], "s")
    }

    #[test]
    fn single_voxel_gives_centroid() {
        let c = cloud(vec![
            Vector3::new(0.001, 0.001, 0.001),
            Vector3::new(0.003, 0.005, 0.001),
            Vector3::new(0.002, 0.003, 0.004),
        ]);
        let d = downsample(&c, 0.02).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d.points[0] - Vector3::new(0.002, 0.003, 0.002)).norm() < 1e-15);
    }

    #[test]
    fn two_clusters() {
        let mut pts = Vec::new();
        for i in 0..10 {
            let e = i as f64 * 0.0005;
            pts.push(Vector3::new(0.005 + e, 0.005, 0.005));
            pts.push(Vector3::new(1.005 + e, 0.005, 0.005));
        }
        assert_eq!(downsample(&cloud(pts), 0.02).unwrap().len(), 2);
    }

    #[test]
    fn cancelling_normals_fall_back_to_first() {
        let mut c = cloud(vec![Vector3::zeros(), Vector3::new(0.001, 0.0, 0.0)]);
        c.normals = vec![Vector3::x(), -Vector3::x()];
        let d = downsample(&c, 0.02).unwrap();
        assert_eq!(d.normals[0], Vector3::x());
    }

    #[test]
    fn majority_label_with_tie_to_smaller_id() {
        let mut c = cloud(vec![Vector3::zeros(); 5]);
        for (v, id) in c.top1.iter_mut().zip([4, 2, 4, 2, 0]) {
            v.id = id;
            v.count = 1;
        }
        let d = downsample(&c, 0.02).unwrap();
        assert_eq!(d.top1[0], Vote { id: 2, count: 2 });
        assert_eq!(d.top2[0], Vote { id: 4, count: 2 });
    }

    #[test]
    fn rejects_bad_voxel() {
        assert!(downsample(&cloud(vec![]), 0.0).is_err());
        assert!(downsample(&cloud(vec![]), -1.0).is_err());
        assert!(downsample(&cloud(vec![]), 0.02).unwrap().is_empty());
    }

    #[test]
    fn count_matches_hash_grid_oracle() {
        // deterministic pseudo-random points
        let mut s = 12345u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let pts: Vec<Vector3<f64>> = (0..5000)
            .map(|_| Vector3::new(next() - 0.5, next() * 2.0, -next()))
            .collect();
        let voxel = 0.05;
        let oracle: HashSet<(i64, i64, i64)> = pts
            .iter()
            .map(|p| {
                (
                    (p.x / voxel).floor() as i64,
                    (p.y / voxel).floor() as i64,
                    (p.z / voxel).floor() as i64,
                )
            })
            .collect();
        assert_eq!(downsample(&cloud(pts), voxel).unwrap().len(), oracle.len());
    }
}
