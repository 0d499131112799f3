use serde::Deserialize;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_LAYOUT: &str = include_str!("../../data/default_layout.toml");

/// Role of a layout box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxKind {
    Wall,
    Door,
    Heater,
    WindowWall,
}

/// How a box contributes a conductivity value.
#[derive(Debug, Clone, PartialEq)]
pub enum Assignment {
    /// Conductivity is the parameter component with this index.
    Group(usize),
    /// Prescribed conductivity.
    Fixed(f64),
    /// Heater: conductivity of the background, load density `power`.
    Heat(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutBox {
    pub kind: BoxKind,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub assignment: Assignment,
}

impl LayoutBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    fn overlaps(&self, other: &LayoutBox) -> bool {
        self.x0.max(other.x0) < self.x1.min(other.x1) && self.y0.max(other.y0) < self.y1.min(other.y1)
    }
}

/// Building layout on a rectangular domain `(0,width)×(0,height)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub width: f64,
    pub height: f64,
    pub air_conductivity: f64,
    pub heater_power: f64,
    /// Names of the parameter groups; the index is the parameter component.
    pub groups: Vec<String>,
    pub boxes: Vec<LayoutBox>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    domain: RawDomain,
    parameters: RawParameters,
    #[serde(rename = "box", default)]
    boxes: Vec<RawBox>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    width: f64,
    height: f64,
    air_conductivity: f64,
    heater_power: f64,
    /// Coordinates of the boxes are multiplied by this factor.
    #[serde(default = "one")]
    unit: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameters {
    groups: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    #[serde(rename = "type")]
    kind: BoxKind,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    group: Option<String>,
    value: Option<f64>,
}

impl Geometry {
    /// The shipped four-room building.
    pub fn default_layout() -> Self {
        Self::from_toml(DEFAULT_LAYOUT).expect("shipped layout is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawLayout = toml::from_str(text).map_err(|e| Error::Layout(e.to_string()))?;
        let d = raw.domain;
        if !(d.width > 0.0 && d.height > 0.0 && d.unit > 0.0) {
            return Err(Error::Layout("domain extents must be positive".into()));
        }
        if !(d.air_conductivity > 0.0) {
            return Err(Error::Layout("air conductivity must be positive".into()));
        }
        let groups = raw.parameters.groups;
        let mut boxes = Vec::with_capacity(raw.boxes.len());
        for (i, b) in raw.boxes.into_iter().enumerate() {
            let (x0, y0, x1, y1) = (b.x0 * d.unit, b.y0 * d.unit, b.x1 * d.unit, b.y1 * d.unit);
            let tol = 1e-12 * d.width.max(d.height);
            if !(x0 < x1 && y0 < y1) || x0 < -tol || y0 < -tol || x1 > d.width + tol || y1 > d.height + tol {
                return Err(Error::Layout(format!("box {i} is empty or leaves the domain")));
            }
            let assignment = match (b.kind, b.group, b.value) {
                (BoxKind::Heater, None, None) => Assignment::Heat(d.heater_power),
                (BoxKind::Heater, None, Some(p)) => Assignment::Heat(p),
                (BoxKind::Heater, Some(_), _) => {
                    return Err(Error::Layout(format!("box {i}: heaters cannot join a parameter group")))
                }
                (_, Some(g), None) => {
                    let idx = groups
                        .iter()
                        .position(|n| *n == g)
                        .ok_or_else(|| Error::Layout(format!("box {i}: unknown group '{g}'")))?;
                    Assignment::Group(idx)
                }
                (_, None, Some(v)) if v > 0.0 => Assignment::Fixed(v),
                (_, None, Some(v)) => return Err(Error::Layout(format!("box {i}: conductivity {v} not positive"))),
                (_, Some(_), Some(_)) => {
                    return Err(Error::Layout(format!("box {i}: both group and value given")))
                }
                (_, None, None) => return Err(Error::Layout(format!("box {i}: needs a group or a value"))),
            };
            boxes.push(LayoutBox { kind: b.kind, x0, y0, x1, y1, assignment });
        }
        for i in 0..boxes.len() {
            for j in 0..i {
                let (a, b) = (&boxes[i], &boxes[j]);
                let conductive = |x: &LayoutBox| !matches!(x.assignment, Assignment::Heat(_));
                if conductive(a) && conductive(b) && a.overlaps(b) && a.assignment != b.assignment {
                    return Err(Error::Layout(format!("boxes {j} and {i} overlap with conflicting assignments")));
                }
            }
        }
        for (g, name) in groups.iter().enumerate() {
            if !boxes.iter().any(|b| b.assignment == Assignment::Group(g)) {
                return Err(Error::Layout(format!("parameter group '{name}' has no boxes")));
            }
        }
        Ok(Geometry {
            width: d.width,
            height: d.height,
            air_conductivity: d.air_conductivity,
            heater_power: d.heater_power,
            groups,
            boxes,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.groups.len()
    }

    /// Conductivity assignment at a point: the first conductive box containing it,
    /// or the background.
    pub fn conductivity_at(&self, x: f64, y: f64) -> Assignment {
        self.boxes
            .iter()
            .find(|b| !matches!(b.assignment, Assignment::Heat(_)) && b.contains(x, y))
            .map(|b| b.assignment.clone())
            .unwrap_or(Assignment::Fixed(self.air_conductivity))
    }

    /// Heat-source density at a point.
    pub fn heat_at(&self, x: f64, y: f64) -> f64 {
        self.boxes
            .iter()
            .filter(|b| b.contains(x, y))
            .filter_map(|b| match b.assignment {
                Assignment::Heat(p) => Some(p),
                _ => None,
            })
            .sum()
    }
}
