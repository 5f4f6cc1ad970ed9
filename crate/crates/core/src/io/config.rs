//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, keys carry their section
//! as a dotted prefix (`model.alpha_in = 10`). Overrides given as
//! `key=value` strings are applied after the file. Every key must be known;
//! relative paths resolve against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::coarse_opt::OptimizerConfig;
use crate::error::{Error, Result};
use crate::fem::assemble::ElasticityParams;
use crate::io::msh::read_msh;
use crate::io::protocol::ExternalBackend;
use crate::mesh::generate::{generate_disk_in_square, Ellipse};
use crate::mesh::Mesh;
use crate::models::flow::FlowParams;
use crate::models::transmission::TransmissionParams;
use crate::par::Exec;
use crate::space_mapping::{AsmConfig, Experiment, FieldComparison, FineBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Transmission,
    Flow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    File(PathBuf),
    /// Circular inclusion in the unit square.
    DiskInSquare { radius: f64, resolution: usize },
}

impl MeshSource {
    pub fn load(&self) -> Result<Mesh> {
        match self {
            MeshSource::File(p) => read_msh(p),
            MeshSource::DiskInSquare { radius, resolution } => generate_disk_in_square(*radius, *resolution),
        }
    }
}

/// Interface resolution of generated disk meshes; about 5.6k nodes.
pub const DEFAULT_RESOLUTION: usize = 140;

/// Settings of the `check-gradient` report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub fields: usize,
    pub seed: u64,
    /// Peak displacement of the random fields in mean edge lengths.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub mesh: MeshSource,
    pub transmission: TransmissionParams,
    pub flow: FlowParams,
    pub target: Ellipse,
    pub target_resolution: usize,
    pub design_target: FieldComparison,
    pub extraction_target: FieldComparison,
    pub asm: AsmConfig,
    pub backend: FineBackend,
    pub output_dir: PathBuf,
    /// Zeroes the wall-clock column so identical runs give identical files.
    pub deterministic: bool,
    pub parallel: bool,
    pub check: GradientCheck,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: ExperimentKind::Transmission,
            mesh: MeshSource::DiskInSquare { radius: 0.2, resolution: DEFAULT_RESOLUTION },
            transmission: TransmissionParams::default(),
            flow: FlowParams::default(),
            target: Ellipse { center: [0.5, 0.5], semi_major: 0.3, semi_minor: 0.15, angle: 30f64.to_radians() },
            target_resolution: DEFAULT_RESOLUTION,
            design_target: FieldComparison::Reference,
            extraction_target: FieldComparison::Reference,
            asm: AsmConfig::default(),
            backend: FineBackend::Internal,
            output_dir: PathBuf::from("out"),
            deterministic: false,
            parallel: true,
            check: GradientCheck { fields: 5, seed: 1, amplitude: 6.0 },
        }
    }
}

/// Every key the parser accepts.
pub const KEYS: &[&str] = &[
    "experiment",
    "mesh.file",
    "mesh.radius",
    "mesh.resolution",
    "model.alpha_in",
    "model.alpha_out",
    "model.f_in",
    "model.f_out",
    "model.beta",
    "model.reynolds",
    "model.inlet_peak",
    "model.inlet_markers",
    "model.wall_markers",
    "model.outlet_markers",
    "model.fixed_wall_markers",
    "target.center",
    "target.semi_major",
    "target.semi_minor",
    "target.angle_deg",
    "target.resolution",
    "target.design",
    "target.extraction",
    "asm.tau",
    "asm.memory",
    "asm.k_max",
    "asm.extraction_rtol",
    "coarse.rtol",
    "coarse.max_iter",
    "coarse.memory",
    "elasticity.mu",
    "elasticity.lambda",
    "elasticity.delta",
    "backend.kind",
    "backend.dir",
    "backend.timeout_s",
    "output.dir",
    "output.deterministic",
    "run.parallel",
    "check.fields",
    "check.seed",
    "check.amplitude",
];

/// Splits `text` into assignments; later lines win.
pub fn parse_assignments(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_assignment(line).ok_or_else(|| Error::ParseError {
            path: origin.into(),
            line: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        out.insert(k, v);
    }
    Ok(out)
}

fn split_assignment(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.to_string()))
}

impl RunConfig {
    /// Reads `path`, applies `overrides` (`key=value`) and validates.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, &path.display().to_string(), &base, overrides)
    }

    pub fn from_text(text: &str, origin: &str, base: &Path, overrides: &[String]) -> Result<Self> {
        let mut map = parse_assignments(text, origin).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = split_assignment(o).ok_or_else(|| Error::Config(format!("override `{o}` is not `key=value`")))?;
            map.insert(k, v);
        }
        Self::from_map(map, base)
    }

    fn from_map(mut map: BTreeMap<String, String>, base: &Path) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let mut c = RunConfig::default();
        let mut take = |k: &str| map.remove(k);

        if let Some(v) = take("experiment") {
            c.experiment = match v.as_str() {
                "transmission" => ExperimentKind::Transmission,
                "flow" => ExperimentKind::Flow,
                _ => return Err(bad("experiment", &v)),
            };
        }
        let file = take("mesh.file");
        let radius = take("mesh.radius").map(|v| num("mesh.radius", &v)).transpose()?;
        let resolution = take("mesh.resolution").map(|v| num("mesh.resolution", &v)).transpose()?;
        c.mesh = match (file, radius, resolution) {
            (Some(f), None, None) => {
                let p = base.join(f);
                if !p.is_file() {
                    return Err(Error::Config(format!("mesh file {} not found", p.display())));
                }
                MeshSource::File(p)
            }
            (Some(_), _, _) => return Err(Error::Config("mesh.file excludes mesh.radius/mesh.resolution".into())),
            (None, r, n) => MeshSource::DiskInSquare { radius: r.unwrap_or(0.2), resolution: n.unwrap_or(DEFAULT_RESOLUTION) },
        };

        let t = &mut c.transmission;
        set(&mut t.alpha_in, take("model.alpha_in"), "model.alpha_in")?;
        set(&mut t.alpha_out, take("model.alpha_out"), "model.alpha_out")?;
        set(&mut t.f_in, take("model.f_in"), "model.f_in")?;
        set(&mut t.f_out, take("model.f_out"), "model.f_out")?;
        set(&mut t.beta, take("model.beta"), "model.beta")?;
        let f = &mut c.flow;
        set(&mut f.reynolds, take("model.reynolds"), "model.reynolds")?;
        set(&mut f.inlet.peak, take("model.inlet_peak"), "model.inlet_peak")?;
        set_list(&mut f.inlet_markers, take("model.inlet_markers"), "model.inlet_markers")?;
        set_list(&mut f.wall_markers, take("model.wall_markers"), "model.wall_markers")?;
        set_list(&mut f.outlet_markers, take("model.outlet_markers"), "model.outlet_markers")?;
        set_list(&mut f.fixed_wall_markers, take("model.fixed_wall_markers"), "model.fixed_wall_markers")?;

        if let Some(v) = take("target.center") {
            let xy: Vec<f64> = list("target.center", &v)?;
            c.target.center = match xy[..] {
                [x, y] => [x, y],
                _ => return Err(bad("target.center", &v)),
            };
        }
        set(&mut c.target.semi_major, take("target.semi_major"), "target.semi_major")?;
        set(&mut c.target.semi_minor, take("target.semi_minor"), "target.semi_minor")?;
        if let Some(v) = take("target.angle_deg") {
            c.target.angle = num::<f64>("target.angle_deg", &v)?.to_radians();
        }
        set(&mut c.target_resolution, take("target.resolution"), "target.resolution")?;
        if let Some(v) = take("target.design") {
            c.design_target = comparison("target.design", &v)?;
        }
        if let Some(v) = take("target.extraction") {
            c.extraction_target = comparison("target.extraction", &v)?;
        }

        let a = &mut c.asm;
        a.tau = if c.experiment == ExperimentKind::Flow { 1e-4 } else { 1e-2 };
        set(&mut a.tau, take("asm.tau"), "asm.tau")?;
        set(&mut a.memory, take("asm.memory"), "asm.memory")?;
        set(&mut a.k_max, take("asm.k_max"), "asm.k_max")?;
        set(&mut a.coarse.rtol, take("coarse.rtol"), "coarse.rtol")?;
        set(&mut a.coarse.max_iter, take("coarse.max_iter"), "coarse.max_iter")?;
        set(&mut a.coarse.memory, take("coarse.memory"), "coarse.memory")?;
        a.extraction_rtol = a.coarse.rtol;
        set(&mut a.extraction_rtol, take("asm.extraction_rtol"), "asm.extraction_rtol")?;
        let e = &mut a.coarse.elasticity;
        set(&mut e.mu, take("elasticity.mu"), "elasticity.mu")?;
        set(&mut e.lambda, take("elasticity.lambda"), "elasticity.lambda")?;
        set(&mut e.delta, take("elasticity.delta"), "elasticity.delta")?;

        let kind = take("backend.kind").unwrap_or_else(|| "internal".into());
        let dir = take("backend.dir");
        let timeout = take("backend.timeout_s").map(|v| num::<f64>("backend.timeout_s", &v)).transpose()?;
        c.backend = match kind.as_str() {
            "internal" => FineBackend::Internal,
            "external" => {
                let dir = dir.ok_or_else(|| Error::Config("backend.kind = external needs backend.dir".into()))?;
                FineBackend::External(ExternalBackend::new(base.join(dir), timeout.unwrap_or(600.0)))
            }
            _ => return Err(bad("backend.kind", &kind)),
        };
        if let Some(v) = take("output.dir") {
            c.output_dir = base.join(v);
        } else {
            c.output_dir = base.join(&c.output_dir);
        }
        set(&mut c.deterministic, take("output.deterministic"), "output.deterministic")?;
        set(&mut c.parallel, take("run.parallel"), "run.parallel")?;
        set(&mut c.check.fields, take("check.fields"), "check.fields")?;
        set(&mut c.check.seed, take("check.seed"), "check.seed")?;
        set(&mut c.check.amplitude, take("check.amplitude"), "check.amplitude")?;
        debug_assert!(map.is_empty());
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        unit("asm.tau", self.asm.tau)?;
        unit("coarse.rtol", self.asm.coarse.rtol)?;
        unit("asm.extraction_rtol", self.asm.extraction_rtol)?;
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.asm.validate().map_err(cfg_err)?;
        self.transmission.validate().map_err(cfg_err)?;
        self.flow.validate().map_err(cfg_err)?;
        if let FineBackend::External(b) = &self.backend {
            if !(b.timeout_s > 0.0) {
                return Err(Error::Config(format!("backend.timeout_s = {} must be positive", b.timeout_s)));
            }
        }
        if self.check.fields == 0 || !(self.check.amplitude > 0.0) {
            return Err(Error::Config("check.fields and check.amplitude must be positive".into()));
        }
        if let MeshSource::DiskInSquare { radius, resolution } = self.mesh {
            if !(radius > 0.0 && radius < 0.5) || resolution < 4 {
                return Err(Error::Config(format!("mesh.radius = {radius} must lie in (0, 0.5) and mesh.resolution = {resolution} be at least 4")));
            }
        }
        if self.target.semi_major <= 0.0 || self.target.semi_minor <= 0.0 || self.target_resolution < 4 {
            return Err(Error::Config("target ellipse axes must be positive and resolution at least 4".into()));
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::default_for_build()
        } else {
            Exec::Sequential
        }
    }

    pub fn elasticity(&self) -> ElasticityParams {
        self.asm.coarse.elasticity
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        self.asm.coarse
    }

    /// The experiment with its desired state built on `reference`.
    pub fn experiment(&self, reference: &Arc<Mesh>) -> Result<Experiment> {
        match self.experiment {
            ExperimentKind::Transmission => Experiment::transmission(
                self.transmission,
                reference,
                self.target,
                self.target_resolution,
                self.design_target,
                self.extraction_target,
                self.exec(),
            ),
            ExperimentKind::Flow => Experiment::flow(self.flow.clone(), reference),
        }
    }
}

fn bad(key: &str, v: &str) -> Error {
    Error::Config(format!("invalid value `{v}` for {key}"))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn set<T: FromStr>(slot: &mut T, v: Option<String>, key: &str) -> Result<()> {
    if let Some(v) = v {
        *slot = num(key, &v)?;
    }
    Ok(())
}

fn set_list<T: FromStr>(slot: &mut Vec<T>, v: Option<String>, key: &str) -> Result<()> {
    if let Some(v) = v {
        *slot = list(key, &v)?;
    }
    Ok(())
}

fn comparison(key: &str, v: &str) -> Result<FieldComparison> {
    match v {
        "eulerian" => Ok(FieldComparison::Eulerian),
        "nodal" => Ok(FieldComparison::Nodal),
        "reference" => Ok(FieldComparison::Reference),
        _ => Err(bad(key, v)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, overrides: &[&str]) -> Result<RunConfig> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        RunConfig::from_text(text, "test.cfg", Path::new(""), &o)
    }

    #[test]
    fn defaults_follow_the_experiment() {
        let t = parse("experiment = transmission\n", &[]).unwrap();
        assert_eq!(t.asm.tau, 1e-2);
        assert_eq!(t.asm.extraction_rtol, 1e-2);
        assert_eq!((t.transmission.alpha_in, t.transmission.beta), (10.0, 100.0));
        let f = parse("experiment = flow\nmesh.radius = 0.25", &[]).unwrap();
        assert_eq!(f.asm.tau, 1e-4);
        assert_eq!(f.mesh, MeshSource::DiskInSquare { radius: 0.25, resolution: 140 });
    }

    #[test]
    fn comments_sections_and_overrides() {
        let text = "# header\nmodel.alpha_in = 4   # inline\n\ncoarse.rtol=1e-3\nmodel.outlet_markers = 7, 8\n";
        let c = parse(text, &["model.alpha_in=12", "target.angle_deg = 90"]).unwrap();
        assert_eq!(c.transmission.alpha_in, 12.0);
        assert_eq!(c.asm.coarse.rtol, 1e-3);
        assert_eq!(c.asm.extraction_rtol, 1e-3);
        assert_eq!(c.flow.outlet_markers, vec![7, 8]);
        assert!((c.target.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for (text, o) in [
            ("model.alpha = 3", vec![]),
            ("", vec!["nope.key=1"]),
            ("asm.tau = 1.5", vec![]),
            ("coarse.rtol = 0", vec![]),
            ("experiment = heat", vec![]),
            ("model.beta = ten", vec![]),
            ("just words", vec![]),
            ("", vec!["missing_equals"]),
            ("backend.kind = external", vec![]),
            ("mesh.file = /definitely/not/here.msh", vec![]),
        ] {
            match parse(text, &o) {
                Err(Error::Config(_)) => {}
                other => panic!("{text:?} {o:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn relative_paths_use_the_config_directory() {
        let c = RunConfig::from_text("backend.kind = external\nbackend.dir = x\noutput.dir = y", "c", Path::new("/base"), &[]).unwrap();
        assert_eq!(c.backend, FineBackend::External(ExternalBackend::new("/base/x", 600.0)));
        assert_eq!(c.output_dir, PathBuf::from("/base/y"));
    }
}
