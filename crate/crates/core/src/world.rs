//! Harvesting scene: fruit targets, trellis region, disturbance schedule and
//! gripper geometry, plus the ground-truth queries used by sensor models and
//! grasp physics.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Gripper capacity bounds on fruit radius, meters.
pub const FRUIT_RADIUS_MIN: f64 = 0.03;
pub const FRUIT_RADIUS_MAX: f64 = 0.06;

/// A single fruit target attached to the trellis.
#[derive(Debug, Clone)]
pub struct FruitTarget {
    pub id: u32,
    /// World-frame position, meters.
    pub position: Vector3<f64>,
    pub radius: f64,
    pub mass: f64,
    pub attached: bool,
    /// Backward travel required to separate the fruit from its stem.
    pub detach_distance: f64,
}

/// External force pulse acting on the vehicle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEvent {
    pub start_time: f64,
    pub duration: f64,
    /// World-frame force, newtons.
    pub force: [f64; 3],
}

/// Fixed geometry of the forward gripper arm.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperGeometry {
    /// Wrist offset from the vehicle center, body frame, meters.
    pub arm_offset: [f64; 3],
    /// Capture radius of the open jaw, meters.
    pub jaw_open_radius: f64,
    /// Time for the jaw to close, seconds.
    pub jaw_close_time: f64,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        Self {
            arm_offset: [0.84, 0.0, -0.2],
            jaw_open_radius: 0.08,
            jaw_close_time: 0.5,
        }
    }
}

impl GripperGeometry {
    pub fn arm_offset_vec(&self) -> Vector3<f64> {
        Vector3::from(self.arm_offset)
    }
}

/// Vertical planar harvesting region. The plane is parallel to the world
/// y-z plane at `origin.x`; `origin.z` is the base height.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionConfig {
    pub origin: [f64; 3],
    pub width: f64,
    pub height: f64,
    /// Allowed fruit offset from the region plane, meters.
    pub depth_tolerance: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0, 0.80],
            width: 2.20,
            height: 0.70,
            depth_tolerance: 0.10,
        }
    }
}

impl RegionConfig {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let o = Vector3::from(self.origin);
        (p.x - o.x).abs() <= self.depth_tolerance
            && (p.y - o.y).abs() <= self.width / 2.0
            && p.z >= o.z
            && p.z <= o.z + self.height
    }
}

/// Explicit fruit placement in the scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FruitSpec {
    pub pos: [f64; 3],
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub detach_distance: Option<f64>,
}

/// Scene portion of the scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Explicitly placed fruits.
    pub fruits: Vec<FruitSpec>,
    /// Additional fruits placed uniformly at random inside the region.
    pub random_fruits: usize,
    pub region: RegionConfig,
    pub takeoff: [f64; 3],
    /// Defaults to the hover spot above the takeoff point.
    pub delivery: Option<[f64; 3]>,
    pub disturbances: Vec<DisturbanceEvent>,
    pub gripper: GripperGeometry,
    pub fruit_radius: f64,
    pub fruit_mass: f64,
    pub fruit_detach_distance: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            fruits: Vec::new(),
            random_fruits: 0,
            region: RegionConfig::default(),
            takeoff: [-1.8, 0.0, 0.0],
            delivery: None,
            disturbances: Vec::new(),
            gripper: GripperGeometry::default(),
            fruit_radius: 0.05,
            fruit_mass: 0.300,
            fruit_detach_distance: 0.15,
        }
    }
}

/// The constructed scene. Immutable after construction except fruit
/// attachment flags and the grip slot, which only the simulation loop
/// mutates.
#[derive(Debug, Clone)]
pub struct HarvestScene {
    pub fruits: Vec<FruitTarget>,
    pub region: RegionConfig,
    pub takeoff_point: Vector3<f64>,
    pub delivery_point: Vector3<f64>,
    pub disturbances: Vec<DisturbanceEvent>,
    pub gripper: GripperGeometry,
    /// Fruit currently held by the jaw, if any.
    gripped: Option<u32>,
}

/// Builds a scene from the config. Placement is a pure function of the
/// config and the scene RNG stream: identical inputs yield identical scenes.
pub fn build_scene(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<HarvestScene> {
    let mut fruits = Vec::new();
    for (i, spec) in config.fruits.iter().enumerate() {
        let fruit = FruitTarget {
            id: i as u32,
            position: Vector3::from(spec.pos),
            radius: spec.radius.unwrap_or(config.fruit_radius),
            mass: spec.mass.unwrap_or(config.fruit_mass),
            attached: true,
            detach_distance: spec.detach_distance.unwrap_or(config.fruit_detach_distance),
        };
        validate_fruit(&fruit, &config.region)?;
        fruits.push(fruit);
    }

    let r = config.fruit_radius;
    let o = Vector3::from(config.region.origin);
    for _ in 0..config.random_fruits {
        let mut placed = false;
        for _attempt in 0..256 {
            let y = o.y + rng.gen_range(-(config.region.width / 2.0 - r)..=(config.region.width / 2.0 - r));
            let z = rng.gen_range((o.z + r)..=(o.z + config.region.height - r));
            let pos = Vector3::new(o.x, y, z);
            let min_sep_ok = fruits.iter().all(|f| {
                (f.position - pos).norm() >= 2.5 * f.radius.max(r)
            });
            if min_sep_ok {
                let fruit = FruitTarget {
                    id: fruits.len() as u32,
                    position: pos,
                    radius: r,
                    mass: config.fruit_mass,
                    attached: true,
                    detach_distance: config.fruit_detach_distance,
                };
                validate_fruit(&fruit, &config.region)?;
                fruits.push(fruit);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SimError::Scene(format!(
                "could not place {} fruits with 2.5r separation in the region",
                config.random_fruits
            )));
        }
    }

    let takeoff = Vector3::from(config.takeoff);
    let delivery = config
        .delivery
        .map(Vector3::from)
        .unwrap_or_else(|| takeoff + Vector3::new(0.0, 0.0, 1.0));

    for d in &config.disturbances {
        if d.duration <= 0.0 {
            return Err(SimError::Scene("disturbance duration must be > 0".into()));
        }
    }

    Ok(HarvestScene {
        fruits,
        region: config.region.clone(),
        takeoff_point: takeoff,
        delivery_point: delivery,
        disturbances: config.disturbances.clone(),
        gripper: config.gripper.clone(),
        gripped: None,
    })
}

fn validate_fruit(fruit: &FruitTarget, region: &RegionConfig) -> Result<()> {
    if !(FRUIT_RADIUS_MIN..=FRUIT_RADIUS_MAX).contains(&fruit.radius) {
        return Err(SimError::Scene(format!(
            "fruit {} radius {} outside gripper capacity [{FRUIT_RADIUS_MIN}, {FRUIT_RADIUS_MAX}]",
            fruit.id, fruit.radius
        )));
    }
    if fruit.mass <= 0.0 {
        return Err(SimError::Scene(format!("fruit {} mass must be > 0", fruit.id)));
    }
    if !region.contains(&fruit.position) {
        return Err(SimError::Scene(format!(
            "fruit {} at {:?} lies outside the harvesting region",
            fruit.id, fruit.position
        )));
    }
    Ok(())
}

/// Vector sum of all disturbance events active at time `t`. Event windows
/// are inclusive on both ends.
pub fn active_disturbance(schedule: &[DisturbanceEvent], t: f64) -> Vector3<f64> {
    let mut total = Vector3::zeros();
    for e in schedule {
        if t >= e.start_time && t <= e.start_time + e.duration {
            total += Vector3::from(e.force);
        }
    }
    total
}

impl HarvestScene {
    pub fn fruit(&self, id: u32) -> Result<&FruitTarget> {
        self.fruits
            .iter()
            .find(|f| f.id == id)
            .ok_or(SimError::UnknownFruit(id))
    }

    fn fruit_mut(&mut self, id: u32) -> Result<&mut FruitTarget> {
        self.fruits
            .iter_mut()
            .find(|f| f.id == id)
            .ok_or(SimError::UnknownFruit(id))
    }

    pub fn gripped_fruit(&self) -> Option<u32> {
        self.gripped
    }

    /// Records that the jaw closed around `id`.
    pub fn grip(&mut self, id: u32) -> Result<()> {
        let fruit = self.fruit(id)?;
        if !fruit.attached {
            return Err(SimError::Scene(format!("fruit {id} is no longer attached")));
        }
        self.gripped = Some(id);
        Ok(())
    }

    /// Releases the jaw without detaching anything.
    pub fn release_grip(&mut self) {
        self.gripped = None;
    }

    /// Applies a backward pull of `backward_travel` meters to the gripped
    /// fruit. Detaches the fruit iff the travel reaches its detach distance
    /// (inclusive). The fruit stays gripped either way.
    pub fn detach_fruit(&mut self, fruit_id: u32, backward_travel: f64) -> Result<bool> {
        if self.gripped != Some(fruit_id) {
            self.fruit(fruit_id)?;
            return Err(SimError::NotGripped(fruit_id));
        }
        let fruit = self.fruit_mut(fruit_id)?;
        if !fruit.attached {
            return Err(SimError::Scene(format!("fruit {fruit_id} is already detached")));
        }
        let detached = backward_travel >= fruit.detach_distance;
        if detached {
            fruit.attached = false;
        }
        Ok(detached)
    }

    /// Drops the gripped fruit at `position` (delivery or mid-air loss).
    pub fn place_gripped(&mut self, position: Vector3<f64>) -> Result<()> {
        let id = self.gripped.ok_or(SimError::Scene("nothing gripped".into()))?;
        let fruit = self.fruit_mut(id)?;
        fruit.position = position;
        self.gripped = None;
        Ok(())
    }

    pub fn attached_fruits(&self) -> impl Iterator<Item = &FruitTarget> {
        self.fruits.iter().filter(|f| f.attached)
    }
}
