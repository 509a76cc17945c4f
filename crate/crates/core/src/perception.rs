//! 3D instance mapping and grasp-target selection.
//!
//! Detections accumulate into a persistent map of fruit instances. Visual
//! servoing always queries the map, never the raw tracker output, so a
//! tracker dropout does not interrupt an approach. Vehicle localization
//! never reads from this map.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Result, SimError};
use crate::sensors::CameraModel;

/// One mapped fruit instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: u32,
    pub centroid: Vector3<f64>,
    pub obs_count: u32,
    pub last_seen: f64,
    pub grasped_or_removed: bool,
}

impl Instance {
    pub fn live(&self) -> bool {
        !self.grasped_or_removed
    }
}

/// Persistent id-keyed instance collection. Ids are never reused and
/// instances never expire within a mission.
#[derive(Debug, Clone)]
pub struct InstanceMap {
    instances: Vec<Instance>,
    /// Nearest-neighbor association gate, meters.
    pub assoc_gate: f64,
    /// Incremental-mean window cap: after this many observations the update
    /// weight stays at 1/cap.
    pub mean_window: u32,
    next_id: u32,
}

impl Default for InstanceMap {
    fn default() -> Self {
        Self::new(0.07, 20)
    }
}

impl InstanceMap {
    pub fn new(assoc_gate: f64, mean_window: u32) -> Self {
        Self { instances: Vec::new(), assoc_gate, mean_window, next_id: 0 }
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn live_instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(|i| i.live())
    }

    fn get(&self, id: u32) -> Result<&Instance> {
        self.instances
            .iter()
            .find(|i| i.id == id)
            .ok_or(SimError::UnknownInstance(id))
    }

    /// Folds one frame of detections into the map. Detections are sorted
    /// lexicographically by centroid first, so the result is independent of
    /// sensor emission order. Each detection associates to the nearest live
    /// instance within the gate (ties to the lowest id); the rest create new
    /// instances.
    pub fn update(&mut self, detections: &[Vector3<f64>], t: f64) {
        let mut sorted: Vec<Vector3<f64>> = detections.to_vec();
        sorted.sort_by(|a, b| {
            (a.x, a.y, a.z)
                .partial_cmp(&(b.x, b.y, b.z))
                .expect("finite centroids")
        });

        for det in sorted {
            let best = self
                .instances
                .iter_mut()
                .filter(|i| i.live())
                .map(|i| {
                    let d = (i.centroid - det).norm();
                    (d, i)
                })
                .filter(|(d, _)| *d <= self.assoc_gate)
                // ties on distance resolve to the lowest id
                .min_by(|(da, ia), (db, ib)| da.partial_cmp(db).unwrap().then(ia.id.cmp(&ib.id)));

            match best {
                Some((_, inst)) => {
                    inst.obs_count += 1;
                    let w = inst.obs_count.min(self.mean_window) as f64;
                    inst.centroid += (det - inst.centroid) / w;
                    inst.last_seen = t;
                }
                None => {
                    self.instances.push(Instance {
                        id: self.next_id,
                        centroid: det,
                        obs_count: 1,
                        last_seen: t,
                        grasped_or_removed: false,
                    });
                    self.next_id += 1;
                }
            }
        }
    }

    /// Picks the live, sufficiently observed instance inside the camera
    /// frustum that is closest to the vehicle; ties break to the lowest id.
    /// `min_obs` filters single-shot phantom instances born from noise
    /// spikes.
    pub fn select_target(
        &self,
        uav_position: &Vector3<f64>,
        uav_rot: &Matrix3<f64>,
        camera: &CameraModel,
        min_obs: u32,
    ) -> Option<u32> {
        self.select_target_excluding(uav_position, uav_rot, camera, min_obs, &[])
    }

    /// `select_target` with an explicit skip list (instances the mission has
    /// given up on).
    pub fn select_target_excluding(
        &self,
        uav_position: &Vector3<f64>,
        uav_rot: &Matrix3<f64>,
        camera: &CameraModel,
        min_obs: u32,
        exclude: &[u32],
    ) -> Option<u32> {
        self.instances
            .iter()
            .filter(|i| i.live() && i.obs_count >= min_obs && !exclude.contains(&i.id))
            .filter(|i| {
                let body = uav_rot.transpose() * (i.centroid - uav_position);
                camera.project(&body).is_some()
            })
            .map(|i| ((i.centroid - uav_position).norm(), i.id))
            .min_by(|(da, ia), (db, ib)| da.partial_cmp(db).unwrap().then(ia.cmp(ib)))
            .map(|(_, id)| id)
    }

    /// Map centroid of a live instance. This is what servoing consumes; the
    /// raw tracker output never reaches the setpoints.
    pub fn query_target(&self, id: u32) -> Result<Vector3<f64>> {
        let inst = self.get(id)?;
        if !inst.live() {
            return Err(SimError::InstanceRemoved(id));
        }
        Ok(inst.centroid)
    }

    /// Flags a harvested instance so re-detections cannot resurrect it.
    pub fn mark_removed(&mut self, id: u32) -> Result<()> {
        let inst = self
            .instances
            .iter_mut()
            .find(|i| i.id == id)
            .ok_or(SimError::UnknownInstance(id))?;
        if inst.grasped_or_removed {
            return Err(SimError::InstanceRemoved(id));
        }
        inst.grasped_or_removed = true;
        Ok(())
    }

    /// Live instance nearest to a point, within the association gate.
    pub fn nearest_live(&self, p: &Vector3<f64>) -> Option<u32> {
        self.instances
            .iter()
            .filter(|i| i.live())
            .map(|i| ((i.centroid - p).norm(), i.id))
            .filter(|(d, _)| *d <= self.assoc_gate)
            .min_by(|(da, ia), (db, ib)| da.partial_cmp(db).unwrap().then(ia.cmp(ib)))
            .map(|(_, id)| id)
    }

    /// Debug dump, one JSON object per line.
    pub fn dump_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Line {
            id: u32,
            centroid: [f64; 3],
            obs_count: u32,
            removed: bool,
        }
        for i in &self.instances {
            let line = Line {
                id: i.id,
                centroid: [i.centroid.x, i.centroid.y, i.centroid.z],
                obs_count: i.obs_count,
                removed: i.grasped_or_removed,
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn first_detection_creates_instance() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.0, 0.0, 1.0)], 0.0);
        assert_eq!(map.instances().len(), 1);
        assert_relative_eq!(map.instances()[0].centroid, Vector3::new(1.0, 0.0, 1.0));
        assert_eq!(map.instances()[0].obs_count, 1);
    }

    #[test]
    fn nearby_detection_updates_incremental_mean() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.0, 0.0, 1.0)], 0.0);
        map.update(&[Vector3::new(1.005, 0.0, 1.0)], 0.1);
        assert_eq!(map.instances().len(), 1);
        assert_relative_eq!(map.instances()[0].centroid, Vector3::new(1.0025, 0.0, 1.0), epsilon = 1e-12);
        assert_eq!(map.instances()[0].obs_count, 2);
    }

    #[test]
    fn detection_beyond_gate_creates_second_instance() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.0, 0.0, 1.0)], 0.0);
        map.update(&[Vector3::new(1.2, 0.0, 1.0)], 0.1);
        assert_eq!(map.instances().len(), 2);
        assert_eq!(map.instances()[1].id, 1);
    }

    #[test]
    fn obs_count_conservation() {
        let mut map = InstanceMap::default();
        for k in 0..30 {
            map.update(&[Vector3::new(1.0, 0.0, 1.0), Vector3::new(1.5, 0.0, 1.0)], k as f64);
        }
        let total: u32 = map.instances().iter().map(|i| i.obs_count).sum();
        assert_eq!(total, 60);
    }

    fn camera_at_origin() -> (Vector3<f64>, Matrix3<f64>, CameraModel) {
        (Vector3::zeros(), Matrix3::identity(), CameraModel::default())
    }

    #[test]
    fn select_nearest_in_fov() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.4, 0.0, 0.0)], 0.0);
        map.update(&[Vector3::new(1.0, 0.1, 0.0)], 0.0);
        let (p, r, cam) = camera_at_origin();
        assert_eq!(map.select_target(&p, &r, &cam, 1), Some(1));
    }

    #[test]
    fn select_tie_breaks_to_lowest_id() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.0, 0.2, 0.0)], 0.0);
        map.update(&[Vector3::new(1.0, -0.2, 0.0)], 0.0);
        let (p, r, cam) = camera_at_origin();
        assert_eq!(map.select_target(&p, &r, &cam, 1), Some(0));
    }

    #[test]
    fn select_skips_removed_and_empty() {
        let mut map = InstanceMap::default();
        let (p, r, cam) = camera_at_origin();
        assert_eq!(map.select_target(&p, &r, &cam, 1), None);
        map.update(&[Vector3::new(1.0, 0.0, 0.0)], 0.0);
        map.mark_removed(0).unwrap();
        assert_eq!(map.select_target(&p, &r, &cam, 1), None);
    }

    #[test]
    fn select_ignores_instances_behind_camera() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(-1.0, 0.0, 0.0)], 0.0);
        let (p, r, cam) = camera_at_origin();
        assert_eq!(map.select_target(&p, &r, &cam, 1), None);
    }

    #[test]
    fn query_persists_across_tracker_dropouts() {
        // the map does not observe the instance for a while; the centroid is
        // still served
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.0, 0.0, 1.0)], 0.0);
        let c = map.query_target(0).unwrap();
        assert_relative_eq!(c, Vector3::new(1.0, 0.0, 1.0));
    }

    #[test]
    fn query_removed_errors() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.0, 0.0, 1.0)], 0.0);
        map.mark_removed(0).unwrap();
        assert!(map.query_target(0).is_err());
        assert!(matches!(map.mark_removed(0), Err(SimError::InstanceRemoved(0))));
        assert!(matches!(map.mark_removed(7), Err(SimError::UnknownInstance(7))));
    }

    #[test]
    fn removed_instance_excluded_from_association() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.0, 0.0, 1.0)], 0.0);
        map.mark_removed(0).unwrap();
        // a detection right on top of the removed instance opens a new one
        map.update(&[Vector3::new(1.0, 0.0, 1.0)], 1.0);
        assert_eq!(map.instances().len(), 2);
        assert_eq!(map.instances()[1].id, 1);
        assert!(map.instances()[1].live());
    }

    #[test]
    fn ids_are_never_reused() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.0, 0.0, 1.0)], 0.0);
        map.mark_removed(0).unwrap();
        map.update(&[Vector3::new(2.0, 0.0, 1.0)], 1.0);
        assert_eq!(map.instances()[1].id, 1);
    }

    #[test]
    fn windowed_mean_tracks_slow_motion() {
        let mut map = InstanceMap::new(0.07, 20);
        let mut p = Vector3::new(1.0, 0.0, 1.0);
        for k in 0..200 {
            p.y += 0.001;
            map.update(&[p], k as f64 / 30.0);
        }
        assert_eq!(map.instances().len(), 1);
        // capped window behaves like an EMA and lags about window/rate behind
        let lag = (p.y - map.instances()[0].centroid.y).abs();
        assert!(lag < 0.025, "lag {lag}");
    }

    #[test]
    fn dump_jsonl_one_line_per_instance() {
        let mut map = InstanceMap::default();
        map.update(&[Vector3::new(1.0, 0.0, 1.0), Vector3::new(1.5, 0.0, 1.0)], 0.0);
        let mut buf = Vec::new();
        map.dump_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains("\"id\":0"));
    }

    proptest! {
        /// Map state is independent of within-frame detection ordering.
        #[test]
        fn order_invariant_association(perm in proptest::sample::subsequence(vec![0usize,1,2,3,4], 5)) {
            let dets = [
                Vector3::new(1.00, 0.00, 1.0),
                Vector3::new(1.20, 0.00, 1.0),
                Vector3::new(1.01, 0.05, 1.0),
                Vector3::new(0.90, -0.30, 1.2),
                Vector3::new(1.19, 0.01, 1.0),
            ];
            let mut order: Vec<usize> = perm.clone();
            for i in 0..5 { if !order.contains(&i) { order.push(i); } }

            let mut a = InstanceMap::default();
            a.update(&dets, 0.0);
            let permuted: Vec<_> = order.iter().map(|&i| dets[i]).collect();
            let mut b = InstanceMap::default();
            b.update(&permuted, 0.0);

            prop_assert_eq!(a.instances().len(), b.instances().len());
            for (ia, ib) in a.instances().iter().zip(b.instances()) {
                prop_assert_eq!(ia.centroid, ib.centroid);
                prop_assert_eq!(ia.obs_count, ib.obs_count);
            }
        }
    }
}
