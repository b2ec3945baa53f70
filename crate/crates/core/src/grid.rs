//! Parametric 2D obstacle worlds over 8-connected grid graphs.
//!
//! Obstacles live in the continuous plane with grid vertex `(x, y)` at integer
//! coordinates. An edge is invalid when its segment touches any obstacle.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ExplicitGraph, VertexId};
use crate::rng::Rng;
use crate::world::{World, WorldDistribution};

/// Half thickness of wall rectangles.
const WALL_HALF_WIDTH: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleKind {
    /// One vertical wall with a single gap of `gap_width` rows at a uniform row.
    /// The wall column is uniform over the middle third unless fixed.
    OneWall {
        gap_width: usize,
        #[serde(default)]
        wall_column: Option<usize>,
    },
    /// Two vertical walls, one in each half, with independent gaps.
    TwoWall { gap_width: usize },
    /// Discs with uniform centres and radii in `[radius_min, radius_max]`.
    Forest {
        obstacles: usize,
        radius_min: f64,
        radius_max: f64,
    },
    /// A wall in the middle column with `gates` evenly spaced openings, each
    /// open independently with probability `open_prob`.
    Gate {
        gates: usize,
        gate_width: usize,
        open_prob: f64,
    },
}

fn default_retry_cap() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub obstacles: ObstacleKind,
    /// Worlds placed in the distribution's training set.
    #[serde(default)]
    pub training_worlds: usize,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: usize,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, obstacles: ObstacleKind) -> Self {
        Self {
            width,
            height,
            obstacles,
            training_worlds: 0,
            retry_cap: default_retry_cap(),
        }
    }

    pub fn with_training_worlds(mut self, n: usize) -> Self {
        self.training_worlds = n;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.width < 3 || self.height < 3 {
            return bad("grid dimensions must be at least 3x3");
        }
        if self.retry_cap == 0 {
            return bad("retry_cap must be positive");
        }
        match &self.obstacles {
            ObstacleKind::OneWall {
                gap_width,
                wall_column,
            } => {
                if *gap_width == 0 || *gap_width > self.height {
                    return bad("gap_width must be in 1..=height");
                }
                if let Some(c) = wall_column {
                    if *c == 0 || *c >= self.width - 1 {
                        return bad("wall_column must be an interior column");
                    }
                }
            }
            ObstacleKind::TwoWall { gap_width } => {
                if *gap_width == 0 || *gap_width > self.height {
                    return bad("gap_width must be in 1..=height");
                }
                if self.width < 5 {
                    return bad("twowall needs width >= 5");
                }
            }
            ObstacleKind::Forest {
                radius_min,
                radius_max,
                ..
            } => {
                if !(*radius_min >= 0.0 && radius_min <= radius_max && radius_max.is_finite()) {
                    return bad("forest radii must satisfy 0 <= radius_min <= radius_max");
                }
            }
            ObstacleKind::Gate {
                gates,
                gate_width,
                open_prob,
            } => {
                if *gates == 0 || *gate_width == 0 || gates * gate_width > self.height {
                    return bad("gates * gate_width must be in 1..=height");
                }
                if !(0.0..=1.0).contains(open_prob) {
                    return bad("open_prob must be in [0, 1]");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    Disc { cx: f64, cy: f64, r: f64 },
}

type Point = (f64, f64);

impl Shape {
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        match *self {
            Shape::Rect { x0, x1, y0, y1 } => segment_hits_rect(a, b, x0, x1, y0, y1),
            Shape::Disc { cx, cy, r } => point_segment_distance((cx, cy), a, b) <= r,
        }
    }
}

/// Liang-Barsky clipping against a closed axis-aligned box.
fn segment_hits_rect(a: Point, b: Point, x0: f64, x1: f64, y0: f64, y1: f64) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [(-dx, a.0 - x0), (dx, x1 - a.0), (-dy, a.1 - y0), (dy, y1 - a.1)] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Obstacles of one sampled world, before stamping.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub shapes: Vec<Shape>,
    /// Wall columns paired with the first row of each open gap.
    pub gaps: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct GridModel {
    spec: GridSpec,
    graph: ExplicitGraph,
    segments: Vec<(Point, Point)>,
}

pub fn grid_vertex(width: usize, x: usize, y: usize) -> VertexId {
    y * width + x
}

/// Builds an 8-connected `width x height` grid with start at the middle of
/// the left column and goal at the middle of the right column.
pub fn grid_graph(width: usize, height: usize) -> Result<(ExplicitGraph, Vec<(Point, Point)>)> {
    if width < 3 || height < 3 {
        return Err(Error::Config("grid dimensions must be at least 3x3".into()));
    }
    let mut edges = Vec::new();
    let mut segments = Vec::new();
    for y in 0..height {
        for x in 0..width {
            for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                let length = if dx != 0 && dy != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                edges.push((grid_vertex(width, x, y), grid_vertex(width, nx, ny), length));
                segments.push(((x as f64, y as f64), (nx as f64, ny as f64)));
            }
        }
    }
    let mid = height / 2;
    let graph = ExplicitGraph::new(
        width * height,
        &edges,
        grid_vertex(width, 0, mid),
        grid_vertex(width, width - 1, mid),
    )?;
    Ok((graph, segments))
}

impl GridModel {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let (graph, segments) = grid_graph(spec.width, spec.height)?;
        Ok(Self {
            spec,
            graph,
            segments,
        })
    }

    pub fn graph(&self) -> &ExplicitGraph {
        &self.graph
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn wall_with_gaps(&self, column: usize, open_rows: &[(usize, usize)]) -> Vec<Shape> {
        // `open_rows` holds half-open row ranges, sorted and disjoint.
        let (x0, x1) = (column as f64 - WALL_HALF_WIDTH, column as f64 + WALL_HALF_WIDTH);
        let mut shapes = Vec::new();
        let mut lo = -1.0;
        for &(start, end) in open_rows {
            let hi = start as f64 - 0.5;
            if hi > lo {
                shapes.push(Shape::Rect { x0, x1, y0: lo, y1: hi });
            }
            lo = end as f64 - 0.5;
        }
        let top = self.spec.height as f64;
        if top > lo {
            shapes.push(Shape::Rect { x0, x1, y0: lo, y1: top });
        }
        shapes
    }

    pub fn sample_layout(&self, rng: &mut Rng) -> Layout {
        let (w, h) = (self.spec.width, self.spec.height);
        match &self.spec.obstacles {
            ObstacleKind::OneWall {
                gap_width,
                wall_column,
            } => {
                let column = wall_column.unwrap_or_else(|| rng.gen_range(w / 3..=(2 * w / 3).max(w / 3)));
                let column = column.clamp(1, w - 2);
                let start = rng.gen_range(0..=h - gap_width);
                Layout {
                    shapes: self.wall_with_gaps(column, &[(start, start + gap_width)]),
                    gaps: vec![(column, start)],
                }
            }
            ObstacleKind::TwoWall { gap_width } => {
                let c1 = rng.gen_range(1..=(w / 2 - 1).max(1));
                let c2 = rng.gen_range((w / 2 + 1).min(w - 2)..=w - 2);
                let mut shapes = Vec::new();
                let mut gaps = Vec::new();
                for c in [c1, c2] {
                    let start = rng.gen_range(0..=h - gap_width);
                    shapes.extend(self.wall_with_gaps(c, &[(start, start + gap_width)]));
                    gaps.push((c, start));
                }
                Layout { shapes, gaps }
            }
            ObstacleKind::Forest {
                obstacles,
                radius_min,
                radius_max,
            } => {
                let shapes = (0..*obstacles)
                    .map(|_| Shape::Disc {
                        cx: rng.gen_range(0.0..=(w - 1) as f64),
                        cy: rng.gen_range(0.0..=(h - 1) as f64),
                        r: if radius_max > radius_min {
                            rng.gen_range(*radius_min..=*radius_max)
                        } else {
                            *radius_min
                        },
                    })
                    .collect();
                Layout {
                    shapes,
                    gaps: Vec::new(),
                }
            }
            ObstacleKind::Gate {
                gates,
                gate_width,
                open_prob,
            } => {
                let column = w / 2;
                let spacing = h / gates;
                let open: Vec<(usize, usize)> = (0..*gates)
                    .filter(|_| rng.gen_bool(*open_prob))
                    .map(|i| {
                        let start = i * spacing + (spacing - gate_width) / 2;
                        (start, start + gate_width)
                    })
                    .collect();
                Layout {
                    shapes: self.wall_with_gaps(column, &open),
                    gaps: open.iter().map(|&(s, _)| (column, s)).collect(),
                }
            }
        }
    }

    /// Marks every edge whose segment touches an obstacle invalid.
    pub fn stamp(&self, layout: &Layout) -> World {
        World::new(
            self.segments
                .iter()
                .map(|&(a, b)| !layout.shapes.iter().any(|s| s.intersects_segment(a, b)))
                .collect(),
        )
    }

    /// Samples layouts until one leaves a feasible path, up to the retry cap.
    pub fn sample(&self, rng: &mut Rng) -> Result<World> {
        for _ in 0..self.spec.retry_cap {
            let world = self.stamp(&self.sample_layout(rng));
            if world.is_feasible(&self.graph) {
                return Ok(world);
            }
        }
        Err(Error::RetryCapExceeded {
            attempts: self.spec.retry_cap,
        })
    }
}

/// Grid graph plus a distribution over obstacle worlds. The training set
/// holds `spec.training_worlds` samples drawn under `seed`.
pub fn grid_world_generator(spec: &GridSpec, seed: u64) -> Result<(ExplicitGraph, WorldDistribution)> {
    let model = GridModel::new(spec.clone())?;
    let graph = model.graph().clone();
    let dist = WorldDistribution::from_grid(model).with_sampled_training(spec.training_worlds, seed)?;
    Ok((graph, dist))
}
