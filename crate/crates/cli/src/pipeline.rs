//! Stage pipeline behind the subcommands. Every stage reads only persisted
//! artifacts and writes its own directory, so downstream stages can be
//! deleted and re-run byte-identically. Failed stages remove their partial
//! outputs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use progspace::cohort::{
    self, ColMeta, ColumnDescriptor, ColumnKind, ColumnStats, Diagnosis, EncodingMap,
    FeatureGroup, ImputePlan, Preprocessor, RawValue,
};
use progspace::error::Error;
use progspace::forest::{
    self, forest_predict_proba, ForestParams, HyperGrid,
};
use progspace::gmm::{self, GmmOptions, Zone};
use progspace::metrics;
use progspace::nmf::{self, AxisInterpretation, NmfOptions, Orientation};
use progspace::seeding;
use progspace::synth::{self, CohortSpec};

use crate::config::{PipelineConfig, PlotKind};
use crate::error::{CliError, Result};
use crate::plot::{self, Annotation, Marker, Series};

pub const CLASS_NAMES: [&str; 4] = ["Control", "Low", "Moderate", "High"];

pub fn class_names() -> Vec<String> {
    CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

fn zone_class(zone: Zone) -> Option<usize> {
    match zone {
        Zone::Low => Some(1),
        Zone::Moderate => Some(2),
        Zone::High => Some(3),
        Zone::Unassigned => None,
    }
}

/// Pipeline stages in run order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Space,
    Clusters,
    Model,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Space, Stage::Clusters, Stage::Model, Stage::Report];

    pub fn token(self) -> &'static str {
        match self {
            Stage::Space => "space",
            Stage::Clusters => "clusters",
            Stage::Model => "model",
            Stage::Report => "report",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|s| s.token() == tok)
    }
}

/// Artifact paths under the output directory.
pub struct RunPaths {
    pub out: PathBuf,
}

impl RunPaths {
    pub fn new(out: &Path) -> Self {
        RunPaths { out: out.to_path_buf() }
    }

    pub fn cohort_dir(&self) -> PathBuf {
        self.out.join("cohort")
    }
    pub fn cohort_csv(&self) -> PathBuf {
        self.cohort_dir().join("cohort.csv")
    }
    pub fn schema_txt(&self) -> PathBuf {
        self.cohort_dir().join("schema.txt")
    }
    pub fn ground_truth(&self) -> PathBuf {
        self.cohort_dir().join("ground_truth.csv")
    }
    pub fn space_dir(&self) -> PathBuf {
        self.out.join("space")
    }
    pub fn design_csv(&self) -> PathBuf {
        self.space_dir().join("design.csv")
    }
    pub fn preprocess_txt(&self) -> PathBuf {
        self.space_dir().join("preprocess.txt")
    }
    pub fn axes_txt(&self) -> PathBuf {
        self.space_dir().join("axes.txt")
    }
    pub fn projections_csv(&self) -> PathBuf {
        self.space_dir().join("projections.csv")
    }
    pub fn clusters_dir(&self) -> PathBuf {
        self.out.join("clusters")
    }
    pub fn gmm_txt(&self) -> PathBuf {
        self.clusters_dir().join("gmm.txt")
    }
    pub fn bic_txt(&self) -> PathBuf {
        self.clusters_dir().join("bic.txt")
    }
    pub fn assignments_csv(&self) -> PathBuf {
        self.clusters_dir().join("assignments.csv")
    }
    pub fn controls_csv(&self) -> PathBuf {
        self.clusters_dir().join("controls.csv")
    }
    pub fn controls_model_txt(&self) -> PathBuf {
        self.clusters_dir().join("controls_model.txt")
    }
    pub fn model_dir(&self) -> PathBuf {
        self.out.join("model")
    }
    pub fn target_csv(&self) -> PathBuf {
        self.model_dir().join("target.csv")
    }
    pub fn grid_txt(&self) -> PathBuf {
        self.model_dir().join("grid.txt")
    }
    pub fn forest_txt(&self) -> PathBuf {
        self.model_dir().join("forest.txt")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }
    pub fn report_csv(&self) -> PathBuf {
        self.report_dir().join("report.csv")
    }
    pub fn folds_txt(&self) -> PathBuf {
        self.report_dir().join("folds.txt")
    }
    pub fn confusion_txt(&self) -> PathBuf {
        self.report_dir().join("confusion.txt")
    }
    pub fn oof_scores_csv(&self) -> PathBuf {
        self.report_dir().join("oof_scores.csv")
    }
    pub fn planting_txt(&self) -> PathBuf {
        self.report_dir().join("planting.txt")
    }
    pub fn plots_dir(&self) -> PathBuf {
        self.out.join("plots")
    }
    pub fn plot_svg(&self, kind: PlotKind) -> PathBuf {
        self.plots_dir().join(format!("{}.svg", kind.token()))
    }
    pub fn manifest_txt(&self) -> PathBuf {
        self.out.join("manifest.txt")
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Core(Error::Io(e)))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        CliError::Core(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

fn run_stage<F: FnOnce() -> Result<()>>(name: &'static str, owned_dirs: &[PathBuf], f: F) -> Result<()> {
    for dir in owned_dirs {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Core(Error::Io(e)))?;
    }
    match f() {
        Ok(()) => Ok(()),
        Err(e) => {
            // partial outputs are removed so reruns start clean
            for dir in owned_dirs {
                let _ = std::fs::remove_dir_all(dir);
            }
            Err(match e {
                CliError::Core(source) => CliError::Stage { stage: name, source },
                other => other,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// simulate

fn build_spec(cfg: &PipelineConfig) -> CohortSpec {
    let mut spec = if cfg.horizon == 48 {
        CohortSpec::default_m48(cfg.synth_seed())
    } else {
        CohortSpec::default_m24(cfg.synth_seed())
    };
    if let Some(n) = cfg.synth.subjects {
        spec.n_subjects = n;
    }
    if let Some(rate) = cfg.synth.missing_rate {
        spec.missing_rate = rate;
    }
    if let Some(rf) = cfg.synth.reversion_fraction {
        spec.reversion_fraction = rf;
    }
    if let Some(sd) = cfg.synth.noise_sd {
        spec.noise_sd = sd;
    }
    spec
}

/// Generate the synthetic cohort files for the configured horizon.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<()> {
    let paths = RunPaths::new(&cfg.out_dir);
    run_stage("simulate", &[paths.cohort_dir()], || {
        let spec = build_spec(cfg);
        let (cohort, truth) = synth::generate_cohort(&spec)?;
        cohort::write_cohort_csv(&cohort, &paths.cohort_csv())?;
        cohort::write_schema(&cohort.schema, &paths.schema_txt())?;
        synth::write_ground_truth(&truth, &paths.ground_truth())?;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// preprocessor persistence

fn write_preprocessor(pre: &Preprocessor, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("months,{},{}\n", pre.input_months[0], pre.input_months[1]));
    out.push_str(&format!("horizon,{}\n", pre.horizon));
    for col in &pre.schema {
        out.push_str(&format!("schema,{},{},{}\n", col.name, col.kind.token(), col.group.token()));
    }
    for (col, fill) in pre.schema.iter().zip(&pre.plan.fills) {
        match fill {
            RawValue::Numeric(v) => out.push_str(&format!("fill,{},num,{v}\n", col.name)),
            RawValue::Categorical(t) => out.push_str(&format!("fill,{},cat,{t}\n", col.name)),
            RawValue::Missing => unreachable!("plans never carry missing fills"),
        }
    }
    for (col, toks) in pre.schema.iter().zip(&pre.encoding.tokens) {
        if let Some(list) = toks {
            out.push_str(&format!("tokens,{},{}\n", col.name, list.join(",")));
        }
    }
    for (meta, st) in pre.col_meta.iter().zip(&pre.col_stats) {
        out.push_str(&format!(
            "col,{},{},{},{},{},{}\n",
            meta.name,
            meta.source,
            meta.group.token(),
            meta.visit_month,
            st.min,
            st.max
        ));
    }
    write_text(path, &out)
}

fn parse_err(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Core(Error::Parse { line, msg: msg.into() })
}

fn read_preprocessor(path: &Path) -> Result<Preprocessor> {
    let text = read_text(path)?;
    let mut input_months = [0u32, 12];
    let mut horizon = 24u32;
    let mut schema: Vec<ColumnDescriptor> = Vec::new();
    let mut fills: HashMap<String, RawValue> = HashMap::new();
    let mut tokens: HashMap<String, Vec<String>> = HashMap::new();
    let mut col_meta: Vec<ColMeta> = Vec::new();
    let mut col_stats: Vec<ColumnStats> = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let parts: Vec<&str> = line.split(',').collect();
        match parts.first() {
            Some(&"months") if parts.len() == 3 => {
                input_months = [
                    parts[1].parse().map_err(|_| parse_err(ln, "bad month"))?,
                    parts[2].parse().map_err(|_| parse_err(ln, "bad month"))?,
                ];
            }
            Some(&"horizon") if parts.len() == 2 => {
                horizon = parts[1].parse().map_err(|_| parse_err(ln, "bad horizon"))?;
            }
            Some(&"schema") if parts.len() == 4 => {
                let kind = ColumnKind::from_token(parts[2])
                    .ok_or_else(|| parse_err(ln, "bad column kind"))?;
                let group = FeatureGroup::from_token(parts[3])
                    .ok_or_else(|| parse_err(ln, "bad feature group"))?;
                schema.push(ColumnDescriptor { name: parts[1].to_string(), kind, group });
            }
            Some(&"fill") if parts.len() == 4 => {
                let value = match parts[2] {
                    "num" => RawValue::Numeric(
                        parts[3].parse().map_err(|_| parse_err(ln, "bad fill value"))?,
                    ),
                    "cat" => RawValue::Categorical(parts[3].to_string()),
                    _ => return Err(parse_err(ln, "bad fill kind")),
                };
                fills.insert(parts[1].to_string(), value);
            }
            Some(&"tokens") if parts.len() >= 3 => {
                tokens.insert(
                    parts[1].to_string(),
                    parts[2..].iter().map(|s| s.to_string()).collect(),
                );
            }
            Some(&"col") if parts.len() == 7 => {
                let group = FeatureGroup::from_token(parts[3])
                    .ok_or_else(|| parse_err(ln, "bad feature group"))?;
                col_meta.push(ColMeta {
                    name: parts[1].to_string(),
                    source: parts[2].to_string(),
                    group,
                    visit_month: parts[4].parse().map_err(|_| parse_err(ln, "bad visit"))?,
                });
                col_stats.push(ColumnStats {
                    min: parts[5].parse().map_err(|_| parse_err(ln, "bad min"))?,
                    max: parts[6].parse().map_err(|_| parse_err(ln, "bad max"))?,
                });
            }
            _ => return Err(parse_err(ln, format!("unexpected line `{line}`"))),
        }
    }

    let plan = ImputePlan {
        fills: schema
            .iter()
            .map(|c| {
                fills
                    .get(&c.name)
                    .cloned()
                    .ok_or_else(|| parse_err(0, format!("missing fill for `{}`", c.name)))
            })
            .collect::<Result<_>>()?,
    };
    let encoding = EncodingMap {
        tokens: schema
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Numeric => None,
                ColumnKind::Categorical => tokens.get(&c.name).cloned(),
            })
            .collect(),
    };
    if encoding
        .tokens
        .iter()
        .zip(&schema)
        .any(|(t, c)| c.kind == ColumnKind::Categorical && t.is_none())
    {
        return Err(parse_err(0, "missing token list for a categorical column"));
    }
    Ok(Preprocessor { schema, plan, encoding, input_months, horizon, col_meta, col_stats })
}

// ---------------------------------------------------------------------------
// space stage

#[derive(Debug, Clone)]
struct ProjectionRow {
    subject_id: String,
    x: f64,
    y: f64,
    score: f64,
    diagnosis: Option<Diagnosis>,
    apoe4: Option<u8>,
    age: f64,
}

fn write_projections(rows: &[ProjectionRow], path: &Path) -> Result<()> {
    let mut out = String::from("subject_id,x,y,score,diagnosis,apoe4,age\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.subject_id,
            r.x,
            r.y,
            r.score,
            r.diagnosis.map(|d| d.token()).unwrap_or(""),
            r.apoe4.map(|v| v.to_string()).unwrap_or_default(),
            r.age
        ));
    }
    write_text(path, &out)
}

fn read_projections(path: &Path) -> Result<Vec<ProjectionRow>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 7 {
            return Err(parse_err(i + 1, "expected 7 projection fields"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| parse_err(i + 1, format!("bad number `{s}`")))
        };
        rows.push(ProjectionRow {
            subject_id: p[0].to_string(),
            x: num(p[1])?,
            y: num(p[2])?,
            score: num(p[3])?,
            diagnosis: if p[4].is_empty() { None } else { Diagnosis::from_token(p[4]) },
            apoe4: if p[5].is_empty() { None } else { p[5].parse().ok() },
            age: num(p[6])?,
        });
    }
    Ok(rows)
}

fn write_design(ids: &[String], values: &Array2<f64>, col_names: &[String], path: &Path) -> Result<()> {
    let mut out = String::from("subject_id,");
    out.push_str(&col_names.join(","));
    out.push('\n');
    for (id, row) in ids.iter().zip(values.rows()) {
        out.push_str(id);
        for v in row {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

fn read_design(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(0, "empty design file"))?;
    let d = header.split(',').count() - 1;
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        ids.push(fields.next().unwrap_or_default().to_string());
        let mut count = 0;
        for f in fields {
            flat.push(f.parse::<f64>().map_err(|_| parse_err(i + 2, "bad design value"))?);
            count += 1;
        }
        if count != d {
            return Err(parse_err(i + 2, "ragged design row"));
        }
    }
    let n = ids.len();
    let values = Array2::from_shape_vec((n, d), flat)
        .map_err(|e| CliError::Core(Error::Shape(e.to_string())))?;
    Ok((ids, values))
}

fn write_axes(interp: &AxisInterpretation, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (a, label) in interp.axis_labels.iter().enumerate() {
        out.push_str(&format!("axis{a},{}\n", label.token()));
    }
    for (a, loadings) in interp.group_loadings.iter().enumerate() {
        out.push_str(&format!(
            "loadings{a},{},{},{},{}\n",
            loadings[0], loadings[1], loadings[2], loadings[3]
        ));
    }
    let o = interp.orientation;
    out.push_str(&format!(
        "orientation,{},{},{},{}\n",
        o.memory_axis, o.cognition_axis, o.memory_sign, o.cognition_sign
    ));
    write_text(path, &out)
}

fn read_orientation(path: &Path) -> Result<Orientation> {
    let text = read_text(path)?;
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("orientation,") {
            let p: Vec<&str> = rest.split(',').collect();
            if p.len() != 4 {
                return Err(parse_err(i + 1, "bad orientation line"));
            }
            return Ok(Orientation {
                memory_axis: p[0].parse().map_err(|_| parse_err(i + 1, "bad axis"))?,
                cognition_axis: p[1].parse().map_err(|_| parse_err(i + 1, "bad axis"))?,
                memory_sign: p[2].parse().map_err(|_| parse_err(i + 1, "bad sign"))?,
                cognition_sign: p[3].parse().map_err(|_| parse_err(i + 1, "bad sign"))?,
            });
        }
    }
    Err(parse_err(0, "axes file has no orientation record"))
}

fn nmf_options(cfg: &PipelineConfig) -> NmfOptions {
    NmfOptions {
        rank: cfg.nmf.rank,
        seed: cfg.nmf_seed(),
        tol: cfg.nmf.tol,
        max_iter: cfg.nmf.max_iter,
    }
}

fn cohort_paths(cfg: &PipelineConfig, paths: &RunPaths) -> (PathBuf, PathBuf) {
    let csv = cfg.cohort_input.clone().unwrap_or_else(|| paths.cohort_csv());
    let schema = cfg.cohort_schema.clone().unwrap_or_else(|| paths.schema_txt());
    (csv, schema)
}

fn stage_space(cfg: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let (csv, schema_path) = cohort_paths(cfg, paths);
    let schema = cohort::load_schema(&schema_path)?;
    let cohort = cohort::load_cohort(&csv, &schema)?;
    let (pre, design) = Preprocessor::fit(&cohort, [0, 12], cfg.horizon)?;

    let opts = nmf_options(cfg);
    let fact = nmf::nmf_fit(&design.values, &opts)?;
    let interp = nmf::interpret_axes(&fact.h, &design.col_meta)?;

    write_preprocessor(&pre, &paths.preprocess_txt())?;
    let col_names: Vec<String> = design.col_meta.iter().map(|m| m.name.clone()).collect();
    let ids: Vec<String> = design.row_meta.iter().map(|m| m.subject_id.clone()).collect();
    write_design(&ids, &design.values, &col_names, &paths.design_csv())?;
    nmf::save_factorization(&fact, &opts, &paths.space_dir())?;
    write_axes(&interp, &paths.axes_txt())?;

    let rows: Vec<ProjectionRow> = design
        .row_meta
        .iter()
        .enumerate()
        .map(|(i, meta)| {
            let x = fact.w[[i, 0]];
            let y = fact.w[[i, 1]];
            ProjectionRow {
                subject_id: meta.subject_id.clone(),
                x,
                y,
                score: interp.orientation.progression_score([x, y]),
                diagnosis: meta.diagnosis,
                apoe4: meta.apoe4_count,
                age: meta.age,
            }
        })
        .collect();
    write_projections(&rows, &paths.projections_csv())
}

// ---------------------------------------------------------------------------
// clusters stage

#[derive(Debug, Clone)]
struct AssignmentRow {
    subject_id: String,
    x: f64,
    y: f64,
    component: usize,
    zone: Zone,
    score: f64,
}

fn write_assignments(rows: &[AssignmentRow], path: &Path) -> Result<()> {
    let mut out = String::from("subject_id,x,y,component,zone,score\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.subject_id,
            r.x,
            r.y,
            r.component,
            r.zone.token(),
            r.score
        ));
    }
    write_text(path, &out)
}

fn read_assignments(path: &Path) -> Result<Vec<AssignmentRow>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 6 {
            return Err(parse_err(i + 1, "expected 6 assignment fields"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| parse_err(i + 1, format!("bad number `{s}`")))
        };
        rows.push(AssignmentRow {
            subject_id: p[0].to_string(),
            x: num(p[1])?,
            y: num(p[2])?,
            component: p[3].parse().map_err(|_| parse_err(i + 1, "bad component"))?,
            zone: Zone::from_token(p[4]).ok_or_else(|| parse_err(i + 1, "bad zone"))?,
            score: num(p[5])?,
        });
    }
    Ok(rows)
}

fn gmm_options(cfg: &PipelineConfig) -> GmmOptions {
    GmmOptions {
        seed: cfg.gmm_seed(),
        reg: cfg.gmm.reg,
        tol: cfg.gmm.tol,
        max_iter: cfg.gmm.max_iter,
    }
}

fn stage_clusters(cfg: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let projections = read_projections(&paths.projections_csv())?;
    let orientation = read_orientation(&paths.axes_txt())?;

    let patients: Vec<&ProjectionRow> = projections
        .iter()
        .filter(|r| matches!(r.diagnosis, Some(Diagnosis::Mci) | Some(Diagnosis::Dementia)))
        .collect();
    if patients.is_empty() {
        return Err(CliError::Core(Error::EmptyDesign(
            "no MCI or dementia subjects to cluster".into(),
        )));
    }
    let points: Vec<[f64; 2]> = patients.iter().map(|r| [r.x, r.y]).collect();
    let opts = gmm_options(cfg);

    let scan = gmm::select_k(&points, cfg.gmm.k_min..=cfg.gmm.k_max, &opts, cfg.gmm.restarts)?;
    let mut bic_out = String::from("k,bic,converged\n");
    for c in &scan.candidates {
        bic_out.push_str(&format!("{},{},{}\n", c.k, c.bic, c.converged));
    }
    bic_out.push_str(&format!("selected,{}\n", scan.selected_k));
    write_text(&paths.bic_txt(), &bic_out)?;

    let model = gmm::gmm_fit_restarts(&points, scan.selected_k, &opts, cfg.gmm.restarts)?;
    if scan.selected_k != 3 {
        return Err(CliError::Core(Error::Labeling(format!(
            "BIC selected k = {}; zone labeling needs exactly 3 components (pin the gmm k range to 3..3 to force it)",
            scan.selected_k
        ))));
    }
    let labeled = gmm::label_zones(&model, &orientation)?;
    gmm::save_gmm(&labeled, &paths.gmm_txt())?;

    let components = gmm::assign(&labeled, &points)?;
    let rows: Vec<AssignmentRow> = patients
        .iter()
        .zip(&components)
        .map(|(r, &comp)| AssignmentRow {
            subject_id: r.subject_id.clone(),
            x: r.x,
            y: r.y,
            component: comp,
            zone: labeled.zone_labels[comp],
            score: r.score,
        })
        .collect();
    write_assignments(&rows, &paths.assignments_csv())?;

    // Aging pattern in controls: a plain k = 2 mixture over the control rows.
    let controls: Vec<&ProjectionRow> = projections
        .iter()
        .filter(|r| matches!(r.diagnosis, Some(Diagnosis::Control)))
        .collect();
    if controls.len() >= 4 {
        let cpoints: Vec<[f64; 2]> = controls.iter().map(|r| [r.x, r.y]).collect();
        let copts = GmmOptions { seed: seeding::derive(opts.seed, &[0xC0]), ..opts };
        let cmodel = gmm::gmm_fit_restarts(&cpoints, 2, &copts, cfg.gmm.restarts)?;
        gmm::save_gmm(&cmodel, &paths.controls_model_txt())?;
        let cassign = gmm::assign(&cmodel, &cpoints)?;
        let mut out = String::from("subject_id,x,y,cluster,age\n");
        for (r, &cl) in controls.iter().zip(&cassign) {
            out.push_str(&format!("{},{},{},{},{}\n", r.subject_id, r.x, r.y, cl, r.age));
        }
        write_text(&paths.controls_csv(), &out)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// model stage

fn read_target(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let text = read_text(path)?;
    let mut ids = Vec::new();
    let mut classes = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (id, class) = line
            .split_once(',')
            .ok_or_else(|| parse_err(i + 1, "expected `subject_id,class`"))?;
        let idx = CLASS_NAMES
            .iter()
            .position(|c| *c == class)
            .ok_or_else(|| parse_err(i + 1, format!("unknown class `{class}`")))?;
        ids.push(id.to_string());
        classes.push(idx);
    }
    Ok((ids, classes))
}

fn build_target(projections: &[ProjectionRow], assignments: &[AssignmentRow]) -> Result<Vec<usize>> {
    let zone_by_subject: HashMap<&str, Zone> = assignments
        .iter()
        .map(|a| (a.subject_id.as_str(), a.zone))
        .collect();
    projections
        .iter()
        .map(|r| match r.diagnosis {
            Some(Diagnosis::Control) => Ok(0),
            Some(_) => {
                let zone = zone_by_subject.get(r.subject_id.as_str()).ok_or_else(|| {
                    CliError::Core(Error::Integrity(format!(
                        "subject `{}` has no cluster assignment",
                        r.subject_id
                    )))
                })?;
                zone_class(*zone).ok_or_else(|| {
                    CliError::Core(Error::Labeling(format!(
                        "subject `{}` sits in an unassigned zone",
                        r.subject_id
                    )))
                })
            }
            None => Err(CliError::Core(Error::Integrity(format!(
                "subject `{}` lacks a horizon diagnosis",
                r.subject_id
            )))),
        })
        .collect()
}

fn depth_token(d: Option<usize>) -> String {
    d.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
}

fn build_grid(cfg: &PipelineConfig, d: usize) -> HyperGrid {
    let mut mtry: Vec<usize> = Vec::new();
    for spec in &cfg.forest.mtry {
        let v = spec.resolve(d);
        if !mtry.contains(&v) {
            mtry.push(v);
        }
    }
    HyperGrid {
        n_trees: cfg.forest.n_trees.clone(),
        max_depth: cfg.forest.max_depth.clone(),
        mtry,
        min_samples_leaf: cfg.forest.min_samples_leaf.clone(),
    }
}

fn stage_model(cfg: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let projections = read_projections(&paths.projections_csv())?;
    let assignments = read_assignments(&paths.assignments_csv())?;
    let (ids, design) = read_design(&paths.design_csv())?;
    let target = build_target(&projections, &assignments)?;
    if ids.len() != target.len() {
        return Err(CliError::Core(Error::Shape(
            "design rows and projection rows disagree".into(),
        )));
    }

    let mut out = String::from("subject_id,class\n");
    for (id, &c) in ids.iter().zip(&target) {
        out.push_str(&format!("{},{}\n", id, CLASS_NAMES[c]));
    }
    write_text(&paths.target_csv(), &out)?;

    let grid = build_grid(cfg, design.ncols());
    let result = forest::grid_search_cv(
        &design,
        &target,
        &class_names(),
        &grid,
        cfg.forest.folds,
        cfg.forest_seed(),
    )?;

    let mut grid_out = String::from("n_trees,max_depth,mtry,min_samples_leaf,cv_accuracy\n");
    for (params, acc) in &result.scores {
        grid_out.push_str(&format!(
            "{},{},{},{},{}\n",
            params.n_trees,
            depth_token(params.max_depth),
            params.mtry,
            params.min_samples_leaf,
            acc
        ));
    }
    let b = result.best;
    grid_out.push_str(&format!(
        "best,{},{},{},{}\n",
        b.n_trees,
        depth_token(b.max_depth),
        b.mtry,
        b.min_samples_leaf
    ));
    write_text(&paths.grid_txt(), &grid_out)?;

    let final_seed = seeding::derive(cfg.forest_seed(), &[0xF1AA]);
    let model = forest::forest_fit(&design, &target, &class_names(), &result.best, final_seed)?;
    forest::save_forest(&model, &paths.forest_txt())?;
    Ok(())
}

fn read_best_params(path: &Path) -> Result<ForestParams> {
    let text = read_text(path)?;
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("best,") {
            let p: Vec<&str> = rest.split(',').collect();
            if p.len() != 4 {
                return Err(parse_err(i + 1, "bad best-params line"));
            }
            let max_depth = if p[1] == "none" {
                None
            } else {
                Some(p[1].parse().map_err(|_| parse_err(i + 1, "bad depth"))?)
            };
            return Ok(ForestParams {
                n_trees: p[0].parse().map_err(|_| parse_err(i + 1, "bad n_trees"))?,
                max_depth,
                mtry: p[2].parse().map_err(|_| parse_err(i + 1, "bad mtry"))?,
                min_samples_leaf: p[3].parse().map_err(|_| parse_err(i + 1, "bad leaf size"))?,
            });
        }
    }
    Err(parse_err(0, "grid file has no best-params line"))
}

// ---------------------------------------------------------------------------
// report stage

fn stage_report(cfg: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let (ids, design) = read_design(&paths.design_csv())?;
    let (_, target) = read_target(&paths.target_csv())?;
    let best = read_best_params(&paths.grid_txt())?;
    let classes = class_names();
    let seed = cfg.forest_seed();

    let folds = forest::stratified_kfold(&target, cfg.forest.folds, seed)?;
    let n = design.nrows();
    let mut fold_accs = Vec::new();
    let mut fold_aucs = Vec::new();
    let mut fold_confusions = Vec::new();
    let mut oof: Vec<(usize, usize, Vec<f64>)> = Vec::new();

    for (f, held_out) in folds.iter().enumerate() {
        let train: Vec<usize> = {
            let mut mask = vec![false; n];
            for &i in held_out {
                mask[i] = true;
            }
            (0..n).filter(|&i| !mask[i]).collect()
        };
        let x_train = take_rows(&design, &train);
        let y_train: Vec<usize> = train.iter().map(|&i| target[i]).collect();
        let model = forest::forest_fit(&x_train, &y_train, &classes, &best, forest::fold_seed(seed, f))?;

        let x_test = take_rows(&design, held_out);
        let y_test: Vec<usize> = held_out.iter().map(|&i| target[i]).collect();
        let proba = forest_predict_proba(&model, &x_test)?;
        let pred = forest::forest_predict(&model, &x_test)?;

        fold_accs.push(metrics::accuracy(&y_test, &pred)?);
        fold_aucs.push(metrics::one_vs_rest_auc(&proba, &y_test)?);
        fold_confusions.push(metrics::confusion_matrix(&y_test, &pred, classes.len())?);
        for (row, &i) in held_out.iter().enumerate() {
            oof.push((i, target[i], proba.row(row).to_vec()));
        }
    }

    let report = metrics::cv_summary(&fold_accs, &fold_aucs, &fold_confusions, &classes, cfg.horizon)?;
    write_text(&paths.report_csv(), &report.render_csv())?;

    let mut folds_out = String::from("fold,accuracy,auc_control,auc_low,auc_moderate,auc_high\n");
    for (f, (acc, aucs)) in fold_accs.iter().zip(&fold_aucs).enumerate() {
        folds_out.push_str(&format!("{f},{acc}"));
        for a in aucs {
            folds_out.push_str(&format!(",{}", a.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())));
        }
        folds_out.push('\n');
    }
    write_text(&paths.folds_txt(), &folds_out)?;

    let mut conf_out = String::from("true_class");
    for c in CLASS_NAMES {
        conf_out.push_str(&format!(",pred_{}", c.to_lowercase()));
    }
    conf_out.push('\n');
    for (i, c) in CLASS_NAMES.iter().enumerate() {
        conf_out.push_str(c);
        for j in 0..CLASS_NAMES.len() {
            conf_out.push_str(&format!(",{}", report.confusion[[i, j]]));
        }
        conf_out.push('\n');
    }
    write_text(&paths.confusion_txt(), &conf_out)?;

    oof.sort_by_key(|(i, _, _)| *i);
    let mut oof_out = String::from("subject_id,true_class,p_control,p_low,p_moderate,p_high\n");
    for (i, true_c, proba) in &oof {
        oof_out.push_str(&format!("{},{}", ids[*i], CLASS_NAMES[*true_c]));
        for p in proba {
            oof_out.push_str(&format!(",{p}"));
        }
        oof_out.push('\n');
    }
    write_text(&paths.oof_scores_csv(), &oof_out)?;

    // When the cohort is synthetic, score the clustering against the sidecar.
    if paths.ground_truth().exists() && paths.assignments_csv().exists() {
        let truth = synth::load_ground_truth(&paths.ground_truth())?;
        let assignments = read_assignments(&paths.assignments_csv())?;
        let clustered: Vec<(String, Zone, f64)> = assignments
            .iter()
            .map(|a| (a.subject_id.clone(), a.zone, a.score))
            .collect();
        let planting = synth::verify_planting(&truth, &clustered)?;
        let mut out = format!("zone_agreement,{}\n", planting.zone_agreement);
        out.push_str(&format!(
            "high_top_tercile,{}\n",
            planting.high_top_tercile.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())
        ));
        write_text(&paths.planting_txt(), &out)?;
    }
    Ok(())
}

fn take_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (r, &i) in rows.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

// ---------------------------------------------------------------------------
// fit driver + manifest

/// Run the pipeline from `from` onward and write the run manifest.
pub fn cmd_fit(cfg: &PipelineConfig, from: Stage) -> Result<()> {
    let paths = RunPaths::new(&cfg.out_dir);
    let (csv, schema) = cohort_paths(cfg, &paths);
    if !csv.exists() || !schema.exists() {
        return Err(CliError::Core(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "cohort files missing ({} / {}); run `progspace simulate` or point [cohort] at your data",
                csv.display(),
                schema.display()
            ),
        ))));
    }
    if from <= Stage::Space {
        run_stage("space", &[paths.space_dir()], || stage_space(cfg, &paths))?;
    }
    if from <= Stage::Clusters {
        run_stage("clusters", &[paths.clusters_dir()], || stage_clusters(cfg, &paths))?;
    }
    if from <= Stage::Model {
        run_stage("model", &[paths.model_dir()], || stage_model(cfg, &paths))?;
    }
    run_stage("report", &[paths.report_dir()], || stage_report(cfg, &paths))?;
    write_manifest(cfg, &paths)
}

/// Re-run only the evaluation stage from persisted artifacts and print the
/// report plus planted-structure agreement when a sidecar is present.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<()> {
    let paths = RunPaths::new(&cfg.out_dir);
    run_stage("report", &[paths.report_dir()], || stage_report(cfg, &paths))?;
    print!("{}", read_text(&paths.report_csv())?);
    if paths.planting_txt().exists() {
        print!("{}", read_text(&paths.planting_txt())?);
    }
    Ok(())
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, base, out)?;
        } else {
            out.push(path.strip_prefix(base).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

/// Manifest: version, seeds, config echo, and a sha256 per artifact plus a
/// run hash over all of them. Paths are relative so identical runs into
/// different directories hash identically.
pub fn write_manifest(cfg: &PipelineConfig, paths: &RunPaths) -> Result<()> {
    let mut files = Vec::new();
    collect_files(&paths.out, &paths.out, &mut files).map_err(|e| CliError::Core(Error::Io(e)))?;
    files.retain(|p| p != Path::new("manifest.txt"));

    let mut out = String::new();
    out.push_str(&format!("progspace,{}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("horizon,{}\n", cfg.horizon));
    out.push_str(&format!("master_seed,{}\n", cfg.master_seed));
    out.push_str(&format!("synth_seed,{}\n", cfg.synth_seed()));
    out.push_str(&format!("nmf_seed,{}\n", cfg.nmf_seed()));
    out.push_str(&format!("gmm_seed,{}\n", cfg.gmm_seed()));
    out.push_str(&format!("forest_seed,{}\n", cfg.forest_seed()));
    out.push_str("config_echo_begin\n");
    out.push_str(&cfg.echo);
    if !cfg.echo.ends_with('\n') && !cfg.echo.is_empty() {
        out.push('\n');
    }
    out.push_str("config_echo_end\n");

    let mut run_hasher = Sha256::new();
    for rel in &files {
        let bytes = std::fs::read(paths.out.join(rel)).map_err(|e| CliError::Core(Error::Io(e)))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let rel_str = rel.to_string_lossy().replace('\\', "/");
        out.push_str(&format!("artifact,{rel_str},{hex}\n"));
        run_hasher.update(rel_str.as_bytes());
        run_hasher.update(digest);
    }
    let run_hex: String = run_hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    out.push_str(&format!("run_hash,{run_hex}\n"));
    write_text(&paths.manifest_txt(), &out)
}

/// The `run_hash` line of a manifest.
pub fn run_hash(out_dir: &Path) -> Result<String> {
    let text = read_text(&RunPaths::new(out_dir).manifest_txt())?;
    text.lines()
        .find_map(|l| l.strip_prefix("run_hash,").map(str::to_string))
        .ok_or_else(|| parse_err(0, "manifest has no run_hash"))
}

/// Planted-structure agreement of a finished run, when its cohort carried a
/// ground-truth sidecar.
pub fn planting_report(out_dir: &Path) -> Result<Option<synth::PlantingReport>> {
    let paths = RunPaths::new(out_dir);
    if !paths.ground_truth().exists() || !paths.assignments_csv().exists() {
        return Ok(None);
    }
    let truth = synth::load_ground_truth(&paths.ground_truth())?;
    let assignments = read_assignments(&paths.assignments_csv())?;
    let clustered: Vec<(String, Zone, f64)> = assignments
        .iter()
        .map(|a| (a.subject_id.clone(), a.zone, a.score))
        .collect();
    Ok(Some(synth::verify_planting(&truth, &clustered)?))
}

// ---------------------------------------------------------------------------
// predict

/// Project a new cohort with the stored training statistics and score its
/// future progression zones.
pub fn cmd_predict(cfg: &PipelineConfig) -> Result<()> {
    let model_dir = cfg.predict.model.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let paths = RunPaths::new(&model_dir);
    let input = cfg
        .predict
        .input
        .clone()
        .ok_or_else(|| CliError::Config("predict needs [predict] input = <cohort.csv>".into()))?;
    let schema_path = cfg
        .predict
        .schema
        .clone()
        .ok_or_else(|| CliError::Config("predict needs [predict] schema = <schema.txt>".into()))?;
    let output = cfg
        .predict
        .output
        .clone()
        .unwrap_or_else(|| model_dir.join("predictions.csv"));

    let pre = read_preprocessor(&paths.preprocess_txt())?;
    let (_, h) = nmf::load_factorization(&paths.space_dir())?;
    let orientation = read_orientation(&paths.axes_txt())?;
    let model = forest::load_forest(&paths.forest_txt())?;

    let schema = cohort::load_schema(&schema_path)?;
    let cohort = cohort::load_cohort(&input, &schema)?;
    let design = pre.transform(&cohort)?;

    let coords = nmf::nmf_transform(&design.values, &h, &nmf_options(cfg))?;
    let proba = forest_predict_proba(&model, &design.values)?;
    let pred = forest::forest_predict(&model, &design.values)?;

    let mut out = String::from(
        "subject_id,x,y,score,p_control,p_low,p_moderate,p_high,predicted\n",
    );
    for (i, meta) in design.row_meta.iter().enumerate() {
        let point = [coords[[i, 0]], coords[[i, 1]]];
        out.push_str(&format!(
            "{},{},{},{}",
            meta.subject_id,
            point[0],
            point[1],
            orientation.progression_score(point)
        ));
        for j in 0..CLASS_NAMES.len() {
            out.push_str(&format!(",{}", proba[[i, j]]));
        }
        out.push_str(&format!(",{}\n", CLASS_NAMES[pred[i]]));
    }
    write_text(&output, &out)
}

// ---------------------------------------------------------------------------
// plots

const COLOR_CONTROL: &str = "#d62728"; // red
const COLOR_MCI: &str = "#1f77b4"; // blue
const COLOR_DEMENTIA: &str = "#2ca02c"; // green
const CLASS_COLORS: [&str; 4] = ["#9467bd", "#d62728", "#1f77b4", "#2ca02c"];

fn dot_series(label: &str, color: &str, points: Vec<(f64, f64)>) -> Series {
    Series { label: label.into(), color: color.into(), marker: Marker::Dot, points }
}

fn plot_space(paths: &RunPaths) -> Result<String> {
    let rows = read_projections(&paths.projections_csv())?;
    let pick = |d: Diagnosis| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.diagnosis == Some(d))
            .map(|r| (r.x, r.y))
            .collect()
    };
    let series = vec![
        dot_series("Control", COLOR_CONTROL, pick(Diagnosis::Control)),
        dot_series("MCI", COLOR_MCI, pick(Diagnosis::Mci)),
        dot_series("Dementia", COLOR_DEMENTIA, pick(Diagnosis::Dementia)),
    ];
    Ok(plot::scatter(
        "Progression space",
        "axis 0 (cognition decline)",
        "axis 1 (memory decline)",
        &series,
        &[],
    ))
}

fn plot_zones(paths: &RunPaths) -> Result<String> {
    let rows = read_assignments(&paths.assignments_csv())?;
    let pick = |z: Zone| -> Vec<(f64, f64)> {
        rows.iter().filter(|r| r.zone == z).map(|r| (r.x, r.y)).collect()
    };
    let series = vec![
        dot_series("Low progression", "#d62728", pick(Zone::Low)),
        dot_series("Moderate progression", "#1f77b4", pick(Zone::Moderate)),
        dot_series("High progression", "#2ca02c", pick(Zone::High)),
    ];
    Ok(plot::scatter(
        "Progression zones (MCI and dementia)",
        "axis 0 (cognition decline)",
        "axis 1 (memory decline)",
        &series,
        &[],
    ))
}

fn plot_roc(paths: &RunPaths) -> Result<String> {
    let text = read_text(&paths.oof_scores_csv())?;
    let mut y_true: Vec<usize> = Vec::new();
    let mut scores: Vec<[f64; 4]> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 6 {
            return Err(parse_err(i + 1, "expected 6 oof fields"));
        }
        let class = CLASS_NAMES
            .iter()
            .position(|c| *c == p[1])
            .ok_or_else(|| parse_err(i + 1, "unknown class"))?;
        y_true.push(class);
        let mut row = [0.0; 4];
        for j in 0..4 {
            row[j] = p[2 + j].parse().map_err(|_| parse_err(i + 1, "bad probability"))?;
        }
        scores.push(row);
    }

    let mut series = Vec::new();
    for (c, name) in CLASS_NAMES.iter().enumerate() {
        let y_bin: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
        if y_bin.iter().all(|&b| b) || y_bin.iter().all(|&b| !b) {
            continue;
        }
        let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let curve = metrics::roc_curve(&s, &y_bin).map_err(CliError::Core)?;
        let area = metrics::auc(&curve).map_err(CliError::Core)?;
        series.push(Series {
            label: format!("{name} (AUC {area:.2})"),
            color: CLASS_COLORS[c].into(),
            marker: Marker::Dot,
            points: curve,
        });
    }
    Ok(plot::curves("One-vs-rest ROC", "false positive rate", "true positive rate", &series))
}

fn plot_apoe4(paths: &RunPaths) -> Result<String> {
    let rows = read_projections(&paths.projections_csv())?;
    let pick = |count: u8| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.apoe4 == Some(count))
            .map(|r| (r.x, r.y))
            .collect()
    };
    // count 1 is omitted to show the contrast between the extremes
    let series = vec![
        dot_series("APOE4 x0", "#1f77b4", pick(0)),
        dot_series("APOE4 x2", "#d62728", pick(2)),
    ];
    Ok(plot::scatter(
        "APOE4 copies in the progression space",
        "axis 0 (cognition decline)",
        "axis 1 (memory decline)",
        &series,
        &[],
    ))
}

fn plot_reversion(cfg: &PipelineConfig, paths: &RunPaths) -> Result<String> {
    let rows = read_projections(&paths.projections_csv())?;
    let (csv, schema_path) = cohort_paths(cfg, paths);
    let schema = cohort::load_schema(&schema_path)?;
    let cohort = cohort::load_cohort(&csv, &schema)?;
    let reversions = cohort::detect_reversions(&cohort);

    let by_id: HashMap<&str, (f64, f64)> =
        rows.iter().map(|r| (r.subject_id.as_str(), (r.x, r.y))).collect();
    let mut to_mci = Vec::new();
    let mut to_control = Vec::new();
    for rev in &reversions {
        if let Some(&pt) = by_id.get(rev.subject_id.as_str()) {
            match rev.to {
                Diagnosis::Mci => to_mci.push(pt),
                Diagnosis::Control => to_control.push(pt),
                Diagnosis::Dementia => {}
            }
        }
    }
    let series = vec![
        dot_series("All subjects", "#c7c7c7", rows.iter().map(|r| (r.x, r.y)).collect()),
        Series {
            label: "Dementia to MCI".into(),
            color: "#9467bd".into(),
            marker: Marker::Cross,
            points: to_mci,
        },
        Series {
            label: "MCI to Control".into(),
            color: "#ff7f0e".into(),
            marker: Marker::Cross,
            points: to_control,
        },
    ];
    Ok(plot::scatter(
        "Reversions in the progression space",
        "axis 0 (cognition decline)",
        "axis 1 (memory decline)",
        &series,
        &[],
    ))
}

fn plot_control_age(paths: &RunPaths) -> Result<String> {
    let text = read_text(&paths.controls_csv())?;
    let mut clusters: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    let mut ages: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 5 {
            return Err(parse_err(i + 1, "expected 5 control fields"));
        }
        let cl: usize = p[3].parse().map_err(|_| parse_err(i + 1, "bad cluster"))?;
        if cl > 1 {
            return Err(parse_err(i + 1, "control cluster outside {0, 1}"));
        }
        let x: f64 = p[1].parse().map_err(|_| parse_err(i + 1, "bad x"))?;
        let y: f64 = p[2].parse().map_err(|_| parse_err(i + 1, "bad y"))?;
        let age: f64 = p[4].parse().map_err(|_| parse_err(i + 1, "bad age"))?;
        clusters[cl].push((x, y));
        ages[cl].push(age);
    }

    let mut series = Vec::new();
    let mut annotations = Vec::new();
    for (cl, color) in [(0usize, "#1f77b4"), (1, "#ff7f0e")] {
        if clusters[cl].is_empty() {
            continue;
        }
        let mean_age = ages[cl].iter().sum::<f64>() / ages[cl].len() as f64;
        let cx = clusters[cl].iter().map(|p| p.0).sum::<f64>() / clusters[cl].len() as f64;
        let cy = clusters[cl].iter().map(|p| p.1).sum::<f64>() / clusters[cl].len() as f64;
        series.push(dot_series(
            &format!("Cluster {} (mean age {mean_age:.2})", cl + 1),
            color,
            clusters[cl].clone(),
        ));
        annotations.push(Annotation { x: cx, y: cy, text: format!("mean age {mean_age:.2}") });
    }
    Ok(plot::scatter(
        "Aging pattern in controls",
        "axis 0 (cognition decline)",
        "axis 1 (memory decline)",
        &series,
        &annotations,
    ))
}

/// Render the requested figure kinds from persisted artifacts.
pub fn cmd_plot(cfg: &PipelineConfig, kinds: &[PlotKind]) -> Result<()> {
    let paths = RunPaths::new(&cfg.out_dir);
    std::fs::create_dir_all(paths.plots_dir()).map_err(|e| CliError::Core(Error::Io(e)))?;
    for &kind in kinds {
        let svg = match kind {
            PlotKind::Space => plot_space(&paths)?,
            PlotKind::Zones => plot_zones(&paths)?,
            PlotKind::Roc => plot_roc(&paths)?,
            PlotKind::Apoe4 => plot_apoe4(&paths)?,
            PlotKind::Reversion => plot_reversion(cfg, &paths)?,
            PlotKind::ControlAge => plot_control_age(&paths)?,
        };
        write_text(&paths.plot_svg(kind), &svg)?;
    }
    Ok(())
}
