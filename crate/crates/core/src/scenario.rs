//! Scenario definitions: a road map, vehicle poses and who hears whom.
//!
//! Scenario files are plain text. `key: value` lines set scalars; a key with
//! an empty value opens a section whose following numeric rows belong to it.
//!
//! ```text
//! name: my_city
//! map: roads.map            # x1 y1 x2 y2 half_width rows, relative path
//! segments:                 # or inline segment rows
//! -300 0 300 0 2
//! radius: 3000
//! poses:                    # x y road_angle_degrees
//! 12.5 0.3 0
//! sample: 50 7 1.0          # or: n seed lateral_spread
//! trim_degree: 20           # optional
//! connection_matrix:        # optional, rows of 0/1, row i receives from j
//! 1 1
//! 0 1
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::network::{sample_poses, ConnectionMatrix, VehicleNetwork, VehiclePose, DEFAULT_RADIUS};
use crate::roadmap::{parse_segment_row, RoadMap, RoadSegment};
use crate::{Error, Result, Vec2};

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN_NAMES: &[&str] = &[
    "four_vehicle",
    "grid_city",
    "grid_city_75",
    "grid_city_50",
    "straight_road",
];

/// Seed of the fifty-vehicle placement shared by the grid-city networks.
pub const GRID_CITY_SEED: u64 = 2018;
pub const GRID_CITY_VEHICLES: usize = 50;
/// Degree cut-offs producing the sparser grid-city networks.
pub const TRIM_75: usize = 20;
pub const TRIM_50: usize = 14;

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub map: RoadMap,
    /// Undirected graph (symmetrized when the connection matrix is directed).
    pub network: VehicleNetwork,
    /// Who receives from whom; drives measurement sharing and fusion support.
    pub support: ConnectionMatrix,
}

impl Scenario {
    pub fn from_network(name: impl Into<String>, map: RoadMap, network: VehicleNetwork) -> Self {
        let support = network.connection_matrix();
        Self {
            name: name.into(),
            map,
            network,
            support,
        }
    }

    /// Uses `support` verbatim; the undirected network links `i` and `j` when
    /// either receives from the other.
    pub fn with_support(
        name: impl Into<String>,
        map: RoadMap,
        poses: Vec<VehiclePose>,
        support: ConnectionMatrix,
    ) -> Result<Self> {
        if support.len() != poses.len() {
            return Err(Error::InvalidInput(format!(
                "connection matrix is {}x{} for {} poses",
                support.len(),
                support.len(),
                poses.len()
            )));
        }
        let n = poses.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if support.get(i, j) || support.get(j, i) {
                    edges.push((i, j));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            map,
            network: VehicleNetwork::new(poses, &edges)?,
            support,
        })
    }

    pub fn len(&self) -> usize {
        self.network.len()
    }

    pub fn is_empty(&self) -> bool {
        self.network.is_empty()
    }

    pub fn poses(&self) -> &[VehiclePose] {
        self.network.poses()
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "four_vehicle" => Ok(four_vehicle()),
            "grid_city" => grid_city(None),
            "grid_city_75" => grid_city(Some(TRIM_75)),
            "grid_city_50" => grid_city(Some(TRIM_50)),
            "straight_road" => Ok(straight_road()),
            _ => Err(Error::InvalidInput(format!(
                "unknown scenario `{name}` (built-ins: {})",
                BUILTIN_NAMES.join(", ")
            ))),
        }
    }

    /// A built-in name or a scenario file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if BUILTIN_NAMES.contains(&name_or_path) {
            Self::builtin(name_or_path)
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        ScenarioSpec::parse(text, origin)?.build(origin)
    }

    /// Self-contained scenario file: inline segments, explicit poses and the
    /// connection matrix.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name: {}", self.name);
        out.push_str("segments:\n");
        for s in self.map.segments() {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                s.start().x,
                s.start().y,
                s.end().x,
                s.end().y,
                s.half_width()
            );
        }
        out.push_str("poses:\n");
        for p in self.poses() {
            let _ = writeln!(out, "{} {} {}", p.position.x, p.position.y, p.road_angle.to_degrees());
        }
        out.push_str("connection_matrix:\n");
        for row in self.support.rows() {
            let cells: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    None,
    Segments,
    Poses,
    Matrix,
}

#[derive(Default)]
struct ScenarioSpec {
    name: Option<String>,
    map_path: Option<String>,
    segments: Vec<RoadSegment>,
    poses: Vec<VehiclePose>,
    sample: Option<(usize, u64, f64)>,
    radius: Option<f64>,
    trim: Option<usize>,
    matrix: Vec<Vec<bool>>,
}

impl ScenarioSpec {
    fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut spec = ScenarioSpec::default();
        let mut section = Section::None;
        for (lineno, raw) in text.lines().enumerate() {
            let err = |m: String| Error::parse(origin, lineno + 1, m);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once(':') {
                let key = key.trim();
                let value = value.trim();
                section = Section::None;
                match key {
                    "name" => spec.name = Some(value.to_string()),
                    "map" => spec.map_path = Some(value.to_string()),
                    "radius" => {
                        spec.radius = Some(value.parse().map_err(|_| err(format!("bad radius `{value}`")))?)
                    }
                    "trim_degree" => {
                        spec.trim = Some(value.parse().map_err(|_| err(format!("bad trim_degree `{value}`")))?)
                    }
                    "sample" => {
                        let parts: Vec<&str> = value.split_whitespace().collect();
                        if parts.len() != 3 {
                            return Err(err("sample expects `n seed spread`".into()));
                        }
                        let n = parts[0].parse().map_err(|_| err("bad sample count".into()))?;
                        let seed = parts[1].parse().map_err(|_| err("bad sample seed".into()))?;
                        let spread = parts[2].parse().map_err(|_| err("bad sample spread".into()))?;
                        spec.sample = Some((n, seed, spread));
                    }
                    "segments" | "poses" | "connection_matrix" if value.is_empty() => {
                        section = match key {
                            "segments" => Section::Segments,
                            "poses" => Section::Poses,
                            _ => Section::Matrix,
                        };
                    }
                    _ => return Err(err(format!("unknown key `{key}`"))),
                }
                continue;
            }
            match section {
                Section::None => return Err(err(format!("row outside any section: `{line}`"))),
                Section::Segments => spec.segments.push(parse_segment_row(line).map_err(err)?),
                Section::Poses => {
                    let vals = parse_floats(line).map_err(err)?;
                    if vals.len() != 3 {
                        return Err(err("pose rows are `x y angle_degrees`".into()));
                    }
                    spec.poses.push(VehiclePose::new(vals[0], vals[1], vals[2].to_radians()));
                }
                Section::Matrix => {
                    let row = line
                        .split_whitespace()
                        .map(|t| match t {
                            "0" => Ok(false),
                            "1" => Ok(true),
                            _ => Err(err(format!("matrix entries are 0 or 1, got `{t}`"))),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    spec.matrix.push(row);
                }
            }
        }
        Ok(spec)
    }

    fn build(self, origin: &Path) -> Result<Scenario> {
        let name = self.name.unwrap_or_else(|| {
            origin
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into())
        });
        let mut segments = self.segments;
        if let Some(rel) = &self.map_path {
            let path = origin.parent().unwrap_or(Path::new(".")).join(rel);
            segments.extend(RoadMap::load(&path)?.segments().iter().cloned());
        }
        let map = RoadMap::new(segments)?;
        let poses = match (self.poses.is_empty(), self.sample) {
            (false, None) => self.poses,
            (true, Some((n, seed, spread))) => sample_poses(&map, n, seed, spread)?,
            (false, Some(_)) => {
                return Err(Error::InvalidInput("give either `poses:` or `sample:`, not both".into()))
            }
            (true, None) => return Err(Error::InvalidInput("scenario has no vehicles".into())),
        };
        if !self.matrix.is_empty() {
            if self.trim.is_some() {
                return Err(Error::InvalidInput(
                    "trim_degree cannot be combined with an explicit connection_matrix".into(),
                ));
            }
            let support = ConnectionMatrix::from_rows(self.matrix)?;
            return Scenario::with_support(name, map, poses, support);
        }
        let mut network = VehicleNetwork::radius_graph(poses, self.radius.unwrap_or(DEFAULT_RADIUS))?;
        if let Some(k) = self.trim {
            network = network.trim_by_degree(k).network;
        }
        Ok(Scenario::from_network(name, map, network))
    }
}

fn parse_floats(line: &str) -> std::result::Result<Vec<f64>, String> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect()
}

fn seg(x1: f64, y1: f64, x2: f64, y2: f64, hw: f64) -> RoadSegment {
    RoadSegment::new(Vec2::new(x1, y1), Vec2::new(x2, y2), hw).expect("fixture segment")
}

/// Lane corridor half-width used by the built-in maps, meters.
pub const LANE_HALF_WIDTH: f64 = 1.75;

/// Two orthogonal roads crossing at the origin, four vehicles, and the
/// directed ring where vehicle `i` receives only from vehicle `i + 1`.
/// Vehicles 1-2 drive east-west and 3-4 north-south, so two of the four
/// neighborhoods see a single road direction.
pub fn four_vehicle() -> Scenario {
    let map = RoadMap::new(vec![
        seg(-400.0, 0.0, 400.0, 0.0, LANE_HALF_WIDTH),
        seg(0.0, -400.0, 0.0, 400.0, LANE_HALF_WIDTH),
    ])
    .expect("fixture map");
    let poses = vec![
        VehiclePose::new(-120.0, 0.6, 0.0),
        VehiclePose::new(95.0, -0.4, 0.0),
        VehiclePose::new(0.5, 140.0, std::f64::consts::FRAC_PI_2),
        VehiclePose::new(-0.7, -80.0, std::f64::consts::FRAC_PI_2),
    ];
    let ring = [[1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1], [1, 0, 0, 1]];
    let support = ConnectionMatrix::from_rows(
        ring.iter().map(|r| r.iter().map(|&v| v == 1).collect()).collect(),
    )
    .expect("fixture matrix");
    Scenario::with_support("four_vehicle", map, poses, support).expect("fixture scenario")
}

/// A single long east-west road; four vehicles that all hear each other.
pub fn straight_road() -> Scenario {
    let map = RoadMap::new(vec![seg(-5000.0, 0.0, 5000.0, 0.0, LANE_HALF_WIDTH)]).expect("fixture map");
    let poses = vec![
        VehiclePose::new(-900.0, 0.3, 0.0),
        VehiclePose::new(-150.0, -0.5, 0.0),
        VehiclePose::new(400.0, 0.1, 0.0),
        VehiclePose::new(1200.0, -0.2, 0.0),
    ];
    let network = VehicleNetwork::radius_graph(poses, DEFAULT_RADIUS).expect("fixture network");
    Scenario::from_network("straight_road", map, network)
}

/// Synthetic city: a sparse arterial grid around a dense downtown grid.
/// Vehicles are drawn proportionally to road length, so downtown holds most
/// of them and ends up with the highest communication degrees.
pub fn grid_city_map() -> RoadMap {
    let hw = LANE_HALF_WIDTH;
    let (extent, arterial) = (5000.0, 2000.0);
    let (core, block) = (800.0, 200.0);
    let mut segments = Vec::new();
    let mut k = -extent;
    while k <= extent + 1e-9 {
        segments.push(seg(-extent, k, extent, k, hw));
        segments.push(seg(k, -extent, k, extent, hw));
        k += arterial;
    }
    let mut k = -core + block / 2.0;
    while k < core {
        segments.push(seg(-core, k, core, k, hw));
        segments.push(seg(k, -core, k, core, hw));
        k += block;
    }
    RoadMap::new(segments).expect("fixture map")
}

/// Fifty vehicles on [`grid_city_map`] linked within 3 km, optionally trimmed
/// by degree.
pub fn grid_city(trim: Option<usize>) -> Result<Scenario> {
    let map = grid_city_map();
    let poses = sample_poses(&map, GRID_CITY_VEHICLES, GRID_CITY_SEED, LANE_HALF_WIDTH)?;
    let mut network = VehicleNetwork::radius_graph(poses, DEFAULT_RADIUS)?;
    let name = match trim {
        None => "grid_city".to_string(),
        Some(k) => {
            network = network.trim_by_degree(k).network;
            match k {
                TRIM_75 => "grid_city_75".to_string(),
                TRIM_50 => "grid_city_50".to_string(),
                _ => format!("grid_city_trim{k}"),
            }
        }
    };
    Ok(Scenario::from_network(name, map, network))
}
