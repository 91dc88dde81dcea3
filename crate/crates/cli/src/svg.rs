//! Deterministic SVG figures of a covering, one chain and one shadow.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use uniform_ext::chains::{shadow, Chain, ChainBuilder, ChainParams, Shadow};
use uniform_ext::covering::CoveringFamily;
use uniform_ext::geometry::{long_distance, Aabb};
use uniform_ext::Error;

use crate::config::ExperimentConfig;
use crate::experiment::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Covering,
    Chain,
    Shadow,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Covering, Figure::Chain, Figure::Shadow];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Covering => "covering",
            Figure::Chain => "chain",
            Figure::Shadow => "shadow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

const W1_STROKE: &str = "#222222";
const W2_FILL: &str = "#d9d9d9";
const W3_FILL: &str = "#7fb3e0";
const PAIR_STROKE: &str = "#c0392b";
const CHAIN_FILL: &str = "#f39c12";
const SHADOW_FILL: &str = "#8e44ad";

struct Canvas {
    view: Aabb<2>,
    size: f64,
    out: String,
}

impl Canvas {
    fn new(view: Aabb<2>, size: f64) -> Self {
        let h = size * view.extent(1) / view.extent(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{h:.0}" viewBox="0 0 {size:.4} {h:.4}">"#
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{size:.4}" height="{h:.4}" fill="white"/>"#);
        Self { view, size, out }
    }

    fn scale(&self) -> f64 {
        self.size / self.view.extent(0)
    }

    /// Screen coordinates; `y` points down.
    fn map(&self, x: [f64; 2]) -> (f64, f64) {
        let s = self.scale();
        ((x[0] - self.view.lo[0]) * s, (self.view.hi[1] - x[1]) * s)
    }

    fn rect(&mut self, b: &Aabb<2>, attrs: &str) {
        let (x0, y1) = self.map(b.lo);
        let (x1, y0) = self.map(b.hi);
        let _ = writeln!(
            self.out,
            r#"<rect x="{x0:.4}" y="{y0:.4}" width="{:.4}" height="{:.4}" {attrs}/>"#,
            x1 - x0,
            y1 - y0
        );
    }

    fn line(&mut self, a: [f64; 2], b: [f64; 2], attrs: &str) {
        let (x0, y0) = self.map(a);
        let (x1, y1) = self.map(b);
        let _ = writeln!(self.out, r#"<line x1="{x0:.4}" y1="{y0:.4}" x2="{x1:.4}" y2="{y1:.4}" {attrs}/>"#);
    }

    fn circle(&mut self, c: [f64; 2], r: f64, attrs: &str) {
        let (x, y) = self.map(c);
        let _ = writeln!(self.out, r#"<circle cx="{x:.4}" cy="{y:.4}" r="{:.4}" {attrs}/>"#, r * self.scale());
    }

    fn group(&mut self, id: &str) {
        let _ = writeln!(self.out, r#"<g id="{id}">"#);
    }

    fn end_group(&mut self) {
        self.out.push_str("</g>\n");
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// The covering by family (interior outlined, exterior gray, symmetrizable
/// cubes colored and linked to their symmetric cubes), with an optional
/// chain highlighted and an optional shadow shaded.
pub fn render_svg(fam: &CoveringFamily<2>, chain: Option<&Chain<2>>, shadow_of: Option<(usize, f64, &Shadow)>, size: f64) -> String {
    let mut c = Canvas::new(fam.computation_box, size);
    let stroke_w = 0.6;
    c.group("w2");
    for q in fam.w2.cubes() {
        c.rect(&q.bbox(), &format!(r#"fill="{W2_FILL}" stroke="white" stroke-width="{stroke_w}""#));
    }
    c.end_group();
    c.group("w3");
    for &i in &fam.w3 {
        c.rect(&fam.w2.get(i).bbox(), &format!(r#"fill="{W3_FILL}" stroke="white" stroke-width="{stroke_w}""#));
    }
    c.end_group();
    c.group("w1");
    for q in fam.w1.cubes() {
        c.rect(&q.bbox(), &format!(r#"fill="none" stroke="{W1_STROKE}" stroke-width="{stroke_w}""#));
    }
    c.end_group();
    if let Some((p, rho, sh)) = shadow_of {
        c.group("shadow");
        for &m in &sh.members {
            c.rect(&fam.w1.get(m).bbox(), &format!(r#"fill="{SHADOW_FILL}" fill-opacity="0.45" stroke="none""#));
        }
        let cube = fam.w1.get(p);
        c.circle(cube.center(), rho * cube.side(), &format!(r#"fill="none" stroke="{SHADOW_FILL}" stroke-width="1.2""#));
        c.rect(&cube.bbox(), &format!(r#"fill="none" stroke="{SHADOW_FILL}" stroke-width="2""#));
        c.end_group();
    }
    if let Some(ch) = chain {
        c.group("chain");
        for q in &ch.cubes {
            c.rect(&q.bbox(), &format!(r#"fill="{CHAIN_FILL}" fill-opacity="0.75" stroke="{W1_STROKE}" stroke-width="{stroke_w}""#));
        }
        let central = ch.central_cube();
        c.rect(&central.bbox(), &format!(r#"fill="none" stroke="{PAIR_STROKE}" stroke-width="2""#));
        c.end_group();
    } else if shadow_of.is_none() {
        c.group("pairs");
        for &i in &fam.w3 {
            if let Some(s) = fam.sym[i] {
                c.line(
                    fam.w2.get(i).center(),
                    fam.w1.get(s).center(),
                    &format!(r#"stroke="{PAIR_STROKE}" stroke-width="0.5" stroke-opacity="0.6""#),
                );
            }
        }
        c.end_group();
    }
    c.finish()
}

/// Smallest interior cube (first in cube order) and the cube farthest from it.
pub fn default_chain_ends(fam: &CoveringFamily<2>) -> Option<(usize, usize)> {
    let set = &fam.w1;
    let q = (0..set.len()).max_by(|&a, &b| set.get(a).generation.cmp(&set.get(b).generation).then(b.cmp(&a)))?;
    let qc = set.get(q);
    let s = (0..set.len()).max_by(|&a, &b| long_distance(&qc, &set.get(a)).total_cmp(&long_distance(&qc, &set.get(b))).then(b.cmp(&a)))?;
    Some((q, s))
}

/// Largest interior cube, first in cube order.
pub fn default_shadow_cube(fam: &CoveringFamily<2>) -> Option<usize> {
    let set = &fam.w1;
    (0..set.len()).min_by_key(|&i| (set.get(i).generation, i))
}

/// The figure for the first domain at the last depth of `cfg`.
pub fn render_figure(cfg: &ExperimentConfig, fig: Figure) -> Result<String, Failure> {
    let spec = &cfg.domains[0];
    let depth = *cfg.depths.last().expect("validated config has depths");
    let label = format!("render {} {} depth {depth}", fig.name(), spec.name());
    let wrap = |error: Error| Failure {
        experiment: label.clone(),
        error,
    };
    let oracle = uniform_ext::domain::make_domain(spec).map_err(wrap)?;
    let fam = uniform_ext::covering::build_families_in_box(oracle, &cfg.whitney_at(depth), cfg.quadrature.computation_box_factor).map_err(wrap)?;
    let size = cfg.figure.size.unwrap_or(800.0);
    let check = |i: usize| -> Result<usize, Failure> {
        if i < fam.w1.len() {
            Ok(i)
        } else {
            Err(wrap(Error::Config(format!("figure cube id {i} exceeds the {} interior cubes", fam.w1.len()))))
        }
    };
    Ok(match fig {
        Figure::Covering => render_svg(&fam, None, None, size),
        Figure::Chain => {
            let ends = match cfg.figure.chain {
                Some((a, b)) => Some((check(a)?, check(b)?)),
                None => default_chain_ends(&fam),
            };
            let chain = match ends {
                Some((a, b)) => Some(ChainBuilder::new(&fam, ChainParams::default()).build_ids(a, b).map_err(wrap)?),
                None => None,
            };
            render_svg(&fam, chain.as_ref(), None, size)
        }
        Figure::Shadow => {
            let p = match cfg.figure.shadow {
                Some(i) => Some(check(i)?),
                None => default_shadow_cube(&fam),
            };
            let rho = cfg.diagnostics.shadow_rho;
            let sh = p.map(|p| (p, shadow(&fam.w1, p, rho)));
            render_svg(&fam, None, sh.as_ref().map(|(p, s)| (*p, rho, s)), size)
        }
    })
}

pub fn figure_path(cfg: &ExperimentConfig, fig: Figure) -> PathBuf {
    cfg.output_dir.join(format!("{}_{}.svg", cfg.name, fig.name()))
}

pub fn render_to_dir(cfg: &ExperimentConfig, fig: Figure) -> Result<PathBuf, Failure> {
    let svg = render_figure(cfg, fig)?;
    let path = figure_path(cfg, fig);
    write(&path, &svg).map_err(|error| Failure {
        experiment: format!("render {}", fig.name()),
        error,
    })?;
    Ok(path)
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Number of `<rect>` elements inside the group `id`.
pub fn count_in_group(svg: &str, id: &str) -> usize {
    let open = format!(r#"<g id="{id}">"#);
    svg.split(&open)
        .nth(1)
        .and_then(|rest| rest.split("</g>").next())
        .map_or(0, |g| g.matches("<rect").count())
}
