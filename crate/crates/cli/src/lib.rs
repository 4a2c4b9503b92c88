//! Config loading, output writers and heat-map rendering behind the
//! `coevonet` binary.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use coevonet::birth_death::{limiting_pmf, steady_state_moments, SteadyStateMoments};
use coevonet::engine::{sweep, Policy, RunRecord, RunSummary, SimConfig, Simulation, SweepResult};
use coevonet::metrics::{
    assortativity, clustering_coefficient, degree_distribution, joint_degree_distribution, Topology,
};
use coevonet::Execution;

/// Parses a TOML config. Unknown keys and out-of-range values are errors;
/// every key left at its default is logged.
pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| config_error(text, &e))?;
    let config: SimConfig = toml::from_str(text).map_err(|e| config_error(text, &e))?;
    let defaults = toml::Table::try_from(SimConfig::default()).expect("default config serializes");
    for (key, value) in &defaults {
        if !table.contains_key(key) {
            log::info!("config: {key} not set, using default {value}");
        }
    }
    config.validate().map_err(|e| anyhow!("config: {e}"))?;
    Ok(config)
}

/// Single-line message naming the key whose value failed to parse.
fn config_error(text: &str, e: &toml::de::Error) -> anyhow::Error {
    let msg = e.message().trim().replace('\n', " ");
    let key = e.span().and_then(|span| {
        let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
        let (key, _) = text[line_start..].split_once('=')?;
        let key = key.trim();
        (!key.is_empty() && !key.starts_with('[')).then(|| key.to_string())
    });
    match key {
        Some(k) if !msg.contains(&format!("`{k}`")) => anyhow!("config: key `{k}`: {msg}"),
        _ => anyhow!("config: {msg}"),
    }
}

pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config_str(&text)
}

/// Loads the config (or defaults) and resolves the seed. A seed is taken
/// from `--seed`, then the file; otherwise a fresh one is drawn and printed.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<SimConfig> {
    let (mut config, file_has_seed) = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let has_seed = text
                .parse::<toml::Table>()
                .map(|t| t.contains_key("seed"))
                .unwrap_or(false);
            (parse_config_str(&text)?, has_seed)
        }
        None => (SimConfig::default(), false),
    };
    match seed {
        Some(s) => config.seed = s,
        None if !file_has_seed => {
            config.seed = fresh_seed();
            eprintln!("seed: {}", config.seed);
        }
        None => {}
    }
    Ok(config)
}

fn fresh_seed() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    coevonet::distributions::mix_seed(nanos, std::process::id() as u64)
}

/// `lo:hi:n`, inclusive of both ends.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        bail!("grid {spec:?}: expected lo:hi:n");
    };
    let lo: f64 = lo
        .trim()
        .parse()
        .with_context(|| format!("grid {spec:?}: bad lower bound"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .with_context(|| format!("grid {spec:?}: bad upper bound"))?;
    let n: usize = n
        .trim()
        .parse()
        .with_context(|| format!("grid {spec:?}: bad point count"))?;
    match n {
        0 => bail!("grid {spec:?}: need at least one point"),
        1 => Ok(vec![lo]),
        _ => Ok((0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RunOutput<'a> {
    seed: u64,
    policy: &'static str,
    summary: RunSummary,
    config: &'a SimConfig,
}

/// Writes `timeseries.csv`, `summary.json` and one node/edge file pair per
/// snapshot.
pub fn write_run(dir: &Path, config: &SimConfig, policy: Policy, record: &RunRecord) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut ts = create(&dir.join("timeseries.csv"))?;
    record.write_timeseries(&mut ts)?;
    ts.flush()?;
    write_json(
        &dir.join("summary.json"),
        &RunOutput {
            seed: config.seed,
            policy: match policy {
                Policy::QLearning => "q_learning",
                Policy::Heuristic => "heuristic",
            },
            summary: record.summary(),
            config,
        },
    )?;
    for snap in &record.snapshots {
        let mut nodes = create(&dir.join(format!("snapshot_{}_nodes.csv", snap.step)))?;
        snap.write_nodes(&mut nodes)?;
        nodes.flush()?;
        let mut edges = create(&dir.join(format!("snapshot_{}_edges.csv", snap.step)))?;
        snap.write_edges(&mut edges)?;
        edges.flush()?;
    }
    Ok(())
}

pub fn simulate(
    config: &SimConfig,
    policy: Policy,
    out: &Path,
    dump_q: bool,
) -> Result<RunSummary> {
    let mut sim = Simulation::with_policy(config.clone(), policy)?;
    sim.run_to_horizon();
    if dump_q {
        let qdir = out.join("q_tables");
        fs::create_dir_all(&qdir).with_context(|| format!("creating {}", qdir.display()))?;
        for a in sim.agents() {
            let mut f = create(&qdir.join(format!("agent_{}.csv", a.id)))?;
            a.q.write_csv(&mut f)?;
            f.flush()?;
        }
    }
    let record = sim.into_record();
    write_run(out, config, policy, &record)?;
    Ok(record.summary())
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    seed: u64,
    replicas: usize,
    sweep: &'a SweepResult,
    config: &'a SimConfig,
}

pub fn run_sweep(
    config: &SimConfig,
    deltas: &[f64],
    rs: &[f64],
    replicas: usize,
    policy: Policy,
    out: &Path,
) -> Result<SweepResult> {
    let result = sweep(config, deltas, rs, replicas, policy, Execution::default())?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut csv = create(&out.join("heatmap.csv"))?;
    result.write_csv(&mut csv)?;
    csv.flush()?;
    for (name, table) in [
        ("heatmap_coop.svg", result.table(|c| c.mean_coop)),
        ("heatmap_nc.svg", result.table(|c| c.mean_nc)),
    ] {
        fs::write(out.join(name), render_heatmap(&table, rs, deltas)?)?;
    }
    write_json(
        &out.join("summary.json"),
        &SweepOutput {
            seed: config.seed,
            replicas,
            sweep: &result,
            config,
        },
    )?;
    Ok(result)
}

#[derive(Serialize)]
pub struct TheoryOutput {
    pub mean: f64,
    pub variance: f64,
    pub sojourn: f64,
}

impl From<SteadyStateMoments> for TheoryOutput {
    fn from(m: SteadyStateMoments) -> Self {
        Self {
            mean: m.mean,
            variance: m.variance,
            sojourn: m.mean_sojourn,
        }
    }
}

/// Default pmf range: mean +- 5 standard deviations.
pub fn theory_range(m: &SteadyStateMoments) -> (u64, u64) {
    let sd = m.variance.sqrt();
    let lo = (m.mean - 5.0 * sd).floor().max(0.0) as u64;
    let hi = (m.mean + 5.0 * sd).ceil() as u64;
    (lo, hi)
}

pub fn write_pmf<W: Write>(config: &SimConfig, lo: u64, hi: u64, mut out: W) -> io::Result<()> {
    writeln!(out, "i,pi")?;
    for i in lo..=hi {
        writeln!(
            out,
            "{},{}",
            i,
            limiting_pmf(config.lambda, &config.lifetime, i)
        )?;
    }
    Ok(())
}

pub fn theory(config: &SimConfig) -> TheoryOutput {
    steady_state_moments(config.lambda, &config.lifetime).into()
}

/// Reads `src_id,dst_id,weight` rows (header optional). Weights are ignored.
pub fn read_edge_list(path: &Path) -> Result<Topology> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_edge_list(&text)
}

/// Adds every id from an `id,row,col,strategy` table, so isolated nodes
/// count towards degree and clustering statistics.
pub fn add_node_table(g: &mut Topology, text: &str) -> Result<()> {
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("id")) {
            continue;
        }
        let id = line.split(',').next().unwrap_or_default();
        g.add_node(
            id.trim()
                .parse()
                .with_context(|| format!("node table line {}: bad id", n + 1))?,
        );
    }
    Ok(())
}

pub fn parse_edge_list(text: &str) -> Result<Topology> {
    let mut g = Topology::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("src_id")) {
            continue;
        }
        let mut cols = line.split(',');
        let mut id = |what| -> Result<u64> {
            cols.next()
                .ok_or_else(|| anyhow!("line {}: missing {what}", n + 1))?
                .trim()
                .parse()
                .with_context(|| format!("line {}: bad {what}", n + 1))
        };
        let (a, b) = (id("src_id")?, id("dst_id")?);
        g.add_edge(a, b);
    }
    Ok(g)
}

#[derive(Serialize)]
pub struct MetricsOutput {
    pub nodes: usize,
    pub edges: usize,
    pub clustering_global: f64,
    /// Ten equal-width bins over [0, 1].
    pub clustering_histogram: Vec<usize>,
    pub assortativity: Option<f64>,
    pub degree_distribution_csv: String,
    pub joint_degree_csv: String,
}

pub fn network_metrics(g: &Topology) -> Result<MetricsOutput> {
    let clustering = clustering_coefficient(g);
    let mut degree_csv = String::from("k,p\n");
    let degrees = degree_distribution(g)?;
    for (k, p) in degrees.support.iter().zip(&degrees.probs) {
        writeln!(degree_csv, "{k},{p}").expect("write to String");
    }
    let mut joint_csv = String::from("j,k,p\n");
    if g.edge_count() > 0 {
        for ((j, k), p) in &joint_degree_distribution(g)?.entries {
            writeln!(joint_csv, "{j},{k},{p}").expect("write to String");
        }
    }
    Ok(MetricsOutput {
        nodes: g.node_count(),
        edges: g.edge_count(),
        clustering_global: clustering.global,
        clustering_histogram: clustering.histogram(10),
        assortativity: assortativity(g),
        degree_distribution_csv: degree_csv,
        joint_degree_csv: joint_csv,
    })
}

pub fn write_metrics_csv(dir: &Path, m: &MetricsOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = [
        (
            dir.join("degree_distribution.csv"),
            &m.degree_distribution_csv,
        ),
        (dir.join("joint_degree.csv"), &m.joint_degree_csv),
    ];
    for (p, body) in &files {
        fs::write(p, body).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

const CELL: usize = 40;
const MARGIN_LEFT: usize = 70;
const MARGIN_TOP: usize = 20;
const MARGIN_BOTTOM: usize = 60;
const LEGEND: usize = 90;

/// Viridis control points.
const PALETTE: [(u8, u8, u8); 5] = [
    (68, 1, 84),
    (59, 82, 139),
    (33, 145, 140),
    (94, 201, 98),
    (253, 231, 37),
];

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let i = (t.floor() as usize).min(PALETTE.len() - 2);
    let f = t - i as f64;
    let (a, b) = (PALETTE[i], PALETTE[i + 1]);
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

/// Standalone SVG heat map. `table[i][j]` is drawn at `(xs[j], ys[i])` with
/// `r` on the horizontal axis and `δ` on the vertical axis, largest `δ` on top.
pub fn render_heatmap(table: &[Vec<f64>], xs: &[f64], ys: &[f64]) -> Result<String> {
    if table.is_empty() || table[0].is_empty() {
        bail!("heat map: empty table");
    }
    let cols = table[0].len();
    if table.iter().any(|row| row.len() != cols) {
        bail!("heat map: table is not rectangular");
    }
    if xs.len() != cols || ys.len() != table.len() {
        bail!("heat map: axis lengths do not match table");
    }
    let values = table.iter().flatten().copied();
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    let scale = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };

    let rows = table.len();
    let width = MARGIN_LEFT + cols * CELL + LEGEND;
    let height = MARGIN_TOP + rows * CELL + MARGIN_BOTTOM;
    let mut svg = String::new();
    let w = &mut svg;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )?;
    writeln!(
        w,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    )?;
    for (i, row) in table.iter().enumerate() {
        let y = MARGIN_TOP + (rows - 1 - i) * CELL;
        for (j, &v) in row.iter().enumerate() {
            let x = MARGIN_LEFT + j * CELL;
            writeln!(
                w,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"><title>{v:.6}</title></rect>"#,
                color(scale(v))
            )?;
        }
        writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
            MARGIN_LEFT - 4,
            y + CELL / 2 + 4,
            ys[i]
        )?;
    }
    let base = MARGIN_TOP + rows * CELL;
    for (j, x) in xs.iter().enumerate() {
        writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="middle">{x:.3}</text>"#,
            MARGIN_LEFT + j * CELL + CELL / 2,
            base + 14
        )?;
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">r</text>"#,
        MARGIN_LEFT + cols * CELL / 2,
        base + 40
    )?;
    writeln!(
        w,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="14">δ</text>"#,
        MARGIN_TOP + rows * CELL / 2
    )?;

    let lx = MARGIN_LEFT + cols * CELL + 20;
    let lh = rows * CELL;
    let steps = 32;
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let y0 = MARGIN_TOP + k * lh / steps;
        let y1 = MARGIN_TOP + (k + 1) * lh / steps;
        writeln!(
            w,
            r#"<rect x="{lx}" y="{y0}" width="14" height="{}" fill="{}"/>"#,
            y1 - y0,
            color(t)
        )?;
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}">{hi:.3}</text>"#,
        lx + 18,
        MARGIN_TOP + 10
    )?;
    writeln!(
        w,
        r#"<text x="{}" y="{}">{lo:.3}</text>"#,
        lx + 18,
        MARGIN_TOP + lh
    )?;
    writeln!(w, "</svg>")?;
    Ok(svg)
}
