//! Command-line front end: build models, verify them, and run the orbit,
//! basin, stripe and perturbation experiments.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use semithick::anosov::{build_model, FiberMap, MapModel};
use semithick::artifact::{model_from_str, model_to_string, perturbation_to_string};
use semithick::dynamics::{basin_estimate, entry_times, exit_time};
use semithick::horseshoe::SMembership;
use semithick::perturb::{check_delta_lemma, check_levels, check_smoothing, linearize_levels, random_stripes};
use semithick::report::Report;
use semithick::statistics::{
    cylinder_frequencies, exit_sweep, grid_lipschitz, lipschitz_measure_check, random_rects, ItinerarySeed,
};
use semithick::stripes::{check_stripe_laws, compute_w, level_threshold};
use semithick::torus::TorusPoint;
use semithick::verify::{check_construction, check_delta_init, check_differential, random_points, verify_finit};

use config::Config;

const EXIT_CHECKS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ARTIFACT: u8 = 3;
const EXIT_CONSTRUCTION: u8 = 4;

#[derive(Parser)]
#[command(name = "semithick", version, about = "C¹ Anosov map of the torus with a semi-thick horseshoe")]
#[command(after_help = "Exit status: 0 all requested checks passed, 1 a check failed, 2 usage or \
configuration error, 3 unreadable or mismatched model document, 4 construction failed.")]
struct Cli {
    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML configuration (version = 1, sections [model] and [run]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the model and write it as a JSON document.
    Build {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the verification suites on a model (exit 0 iff all pass).
    Verify {
        #[command(flatten)]
        model: ModelArg,
        /// Approximate number of grid points (default from the config).
        #[arg(long)]
        grid: Option<usize>,
        /// Random points for the finite-difference cross-check.
        #[arg(long, default_value_t = 100_000)]
        fd_points: usize,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Monte-Carlo basin of S. CSV columns: t,p_in,ci_in,p_unresolved,ci_unresolved.
    Basin {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        samples: Option<u64>,
        /// Comma-separated iteration caps.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<u64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// One orbit (CSV n,u,v,x,y,membership) or, with --words, its word
    /// frequencies (CSV word,count,freq,expected,deviation,bound).
    Orbit {
        #[command(flatten)]
        model: ModelArg,
        /// Seed point `u,v` on the torus.
        #[arg(long, value_delimiter = ',', num_args = 2, conflicts_with_all = ["periodic", "bernoulli"])]
        point: Option<Vec<f64>>,
        /// Periodic itinerary, e.g. `01`.
        #[arg(long, conflicts_with = "bernoulli")]
        periodic: Option<String>,
        /// Fair coin-toss itinerary drawn from this seed.
        #[arg(long)]
        bernoulli: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: Option<u64>,
        /// Tabulate frequencies of words up to this length.
        #[arg(long)]
        words: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Curves of W_0 ⊂ … ⊂ W_m. CSV columns: boundary,level,curve,word,x,y.
    Stripes {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=16))]
        levels: u64,
        /// Points per polyline.
        #[arg(long, default_value_t = 257, value_parser = clap::value_parser!(u64).range(2..))]
        points: u64,
        /// Also run the stripe laws and the exit sweep.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Linearize on stripes of levels from+1..=to and check the stage map.
    /// The δ_init predicate is reported faithfully and may fail.
    Perturb {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        /// Also check the linearization and smoothing bounds on this many random stripes.
        #[arg(long, default_value_t = 0)]
        lemmas: usize,
        /// Sup-distance target of the smoothing.
        #[arg(long, default_value_t = 1e-6)]
        gamma: f64,
        /// Also run the Lipschitz measure inequality on the configured rectangles.
        #[arg(long)]
        lipschitz: bool,
        /// Write the perturbation document here.
        #[arg(long)]
        document: Option<PathBuf>,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Grayscale raster (binary, header line `P5 width height 255`) of first
    /// entry times into the cover of S, or of escape times from UK.
    Render {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..=8192))]
        width: u64,
        #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..=8192))]
        height: u64,
        #[arg(long, default_value_t = 64)]
        steps: u64,
        #[arg(long, value_enum, default_value_t = Window::Torus)]
        window: Window,
        /// `entry`: brighter = earlier entry, black = none within the steps.
        /// `escape`: brighter = longer stay in UK, white = never left.
        #[arg(long, value_enum, default_value_t = Shade::Entry)]
        shade: Shade,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArg {
    /// Model document written by `build`.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct OutArg {
    /// Output file (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct JsonArg {
    /// Also write the reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shade {
    Entry,
    Escape,
}

#[derive(Clone, Copy, ValueEnum)]
enum Window {
    Torus,
    Uk,
}

enum Failure {
    Usage(anyhow::Error),
    Artifact(anyhow::Error),
    Construction(anyhow::Error),
    Checks,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Construction(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Construction(e.into())
    }
}

impl From<semithick::Error> for Failure {
    fn from(e: semithick::Error) -> Self {
        Failure::Construction(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load_model(path: &Path) -> std::result::Result<MapModel, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read model {}", path.display()))
        .map_err(Failure::Artifact)?;
    model_from_str(&text)
        .with_context(|| format!("invalid model document {}", path.display()))
        .map_err(Failure::Artifact)
}

fn write_output(out: &Option<PathBuf>, bytes: &[u8]) -> std::io::Result<()> {
    match out {
        Some(p) => fs::write(p, bytes),
        None => std::io::stdout().write_all(bytes),
    }
}

/// Print reports; write them as JSON if asked; fail if any check failed.
fn finish(reports: &[Report], json: &JsonArg) -> Outcome {
    for r in reports {
        println!("{r}");
    }
    if let Some(p) = &json.json {
        let text = serde_json::to_string_pretty(reports).map_err(anyhow::Error::from)?;
        fs::write(p, text + "\n")?;
    }
    if reports.iter().all(Report::passed) {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn membership_name(s: SMembership) -> &'static str {
    match s {
        SMembership::In => "in",
        SMembership::Out => "out",
        SMembership::Unresolved => "unresolved",
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Usage(e.into()))?;
    }
    let cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(Failure::Usage)?,
        None => Config::default(),
    };
    let run = &cfg.run;
    match cli.command {
        Command::Build { out } => {
            let m = build_model(&cfg.model)?;
            fs::write(&out, model_to_string(&m)?)?;
            let r = &m.regions;
            println!("model written to {}", out.display());
            println!("N_init = {}, lambda_u = {:e}", m.params.n_init, m.linear.lambda_u);
            println!("w = {:e}, h = {:e}, kappa = {:e}, first gap = {:e}", r.w(), r.h(), r.kappa, r.a1);
            let (lo, hi) = m.cantor.measure_bounds();
            println!("Cantor measure in [{lo:e}, {hi:e}] at depth {}", m.cantor.depth);
            Ok(())
        }
        Command::Verify { model, grid, fd_points, json } => {
            let m = load_model(&model.model)?;
            let n = grid.unwrap_or(run.grid);
            let mut reports = vec![check_construction(&m), verify_finit(&m, n)];
            reports.push(check_delta_init(&m, m.params.delta_init, n, &[]));
            if fd_points > 0 {
                reports.push(check_differential(&m, &random_points(&m, fd_points, run.seed)));
            }
            finish(&reports, &json)
        }
        Command::Basin { model, samples, ladder, seed, out } => {
            let m = load_model(&model.model)?;
            let n = samples.unwrap_or(run.basin_samples);
            let ladder = ladder.unwrap_or_else(|| run.basin_ladder.clone());
            let est = basin_estimate(&m, n, &ladder, seed.unwrap_or(run.seed)).map_err(|e| Failure::Usage(e.into()))?;
            let mut csv = String::from("t,p_in,ci_in,p_unresolved,ci_unresolved\n");
            for r in &est.rungs {
                csv += &format!("{},{:e},{:e},{:e},{:e}\n", r.t, r.p_in, r.ci, r.p_unresolved, r.ci_unresolved);
            }
            write_output(&out.out, csv.as_bytes())?;
            eprintln!(
                "Leb(S) in [{:e}, {:e}]; p_in monotone up to CI: {}",
                est.leb_s.0, est.leb_s.1, est.monotone
            );
            Ok(())
        }
        Command::Orbit { model, point, periodic, bernoulli, steps, words, out } => {
            let m = load_model(&model.model)?;
            let seed = match (point, periodic, bernoulli) {
                (Some(p), _, _) => ItinerarySeed::Point(TorusPoint::new(p[0], p[1])),
                (_, Some(w), _) => {
                    let sym: Option<Vec<u8>> = w
                        .chars()
                        .map(|c| c.to_digit(2).map(|d| d as u8))
                        .collect();
                    ItinerarySeed::Periodic(
                        sym.filter(|s| !s.is_empty())
                            .ok_or_else(|| Failure::Usage(anyhow!("--periodic takes a non-empty word of 0 and 1")))?,
                    )
                }
                (_, _, Some(s)) => ItinerarySeed::Bernoulli(s),
                _ => ItinerarySeed::Point(m.p0()),
            };
            let t = steps.unwrap_or(run.frequency_steps as u64) as usize;
            match words {
                Some(k) => {
                    let table = cylinder_frequencies(&m, &seed, t, k).map_err(|e| match e {
                        semithick::Error::InvalidParameter(_) => Failure::Usage(e.into()),
                        e => Failure::Construction(e.into()),
                    })?;
                    let mut csv = String::from("word,count,freq,expected,deviation,bound\n");
                    for r in &table.rows {
                        csv += &format!("{},{},{:e},{:e},{:e},{:e}\n", r.word, r.count, r.freq, r.expected, r.deviation, r.bound);
                    }
                    write_output(&out.out, csv.as_bytes())?;
                    eprintln!(
                        "T = {t}, largest deviation/bound = {:.4}, pseudo-orbit defect = {:e}",
                        table.worst_ratio(),
                        table.max_defect
                    );
                    // the frequency bound is a check only for coin-toss itineraries
                    if matches!(seed, ItinerarySeed::Bernoulli(_)) && !table.within_bound() {
                        return Err(Failure::Checks);
                    }
                    Ok(())
                }
                None => {
                    let ItinerarySeed::Point(mut p) = seed else {
                        return Err(Failure::Usage(anyhow!("symbolic itineraries need --words")));
                    };
                    let chart = *m.chart();
                    let mut csv = String::from("n,u,v,x,y,membership\n");
                    for n in 0..=t {
                        let (x, y) = chart.local(&p);
                        csv += &format!("{n},{:e},{:e},{:e},{:e},{}\n", p.u, p.v, x, y, membership_name(m.s_membership(&p)));
                        p = m.apply(&p);
                    }
                    write_output(&out.out, csv.as_bytes())?;
                    Ok(())
                }
            }
        }
        Command::Stripes { model, levels, points, check, out, json } => {
            let m = load_model(&model.model)?;
            let lt = level_threshold(&m)?;
            let set = compute_w(&m, levels as usize, lt.l_lev)?;
            let mut csv = String::from("boundary,level,curve,word,x,y\n");
            for (k, (c, poly)) in set.curves.iter().enumerate() {
                let boundary = if c.base == 0 { "bottom" } else { "top" };
                let word: String = c.word.iter().map(|&b| char::from(b'0' + b)).collect();
                let n = poly.ys.len() - 1;
                for j in 0..points as usize {
                    let i = (j * n + (points as usize - 1) / 2) / (points as usize - 1);
                    csv += &format!("{boundary},{},{k},{word},{:e},{:e}\n", c.level(), poly.x_at(i), poly.ys[i]);
                }
            }
            write_output(&out.out, csv.as_bytes())?;
            eprintln!(
                "{} curves, {} stripes, level threshold L = {}",
                set.curves.len(),
                set.stripes.len(),
                lt.l_lev
            );
            if check {
                let laws = check_stripe_laws(&m, &set, lt.l_lev, 4096);
                let sweep = exit_sweep(&m, 1000, run.seed, run.t_cap);
                // reports go to standard error when the curves use standard output
                if out.out.is_none() {
                    eprintln!("{laws}\n{sweep}");
                    return if laws.passed() && sweep.passed() { Ok(()) } else { Err(Failure::Checks) };
                }
                return finish(&[laws, sweep], &json);
            }
            Ok(())
        }
        Command::Perturb { model, from, to, lemmas, gamma, lipschitz, document, json } => {
            let m = load_model(&model.model)?;
            if to < from || to > 16 {
                return Err(Failure::Usage(anyhow!("need from ≤ to ≤ 16")));
            }
            let lt = level_threshold(&m)?;
            let set = compute_w(&m, to.max(1), lt.l_lev)?;
            let map = linearize_levels(&m, &set, from, to)?;
            let mut reports = vec![check_levels(&m, &set, &map, from, to, run.grid.min(100_000))?];
            if let Some(p) = &document {
                fs::write(p, perturbation_to_string(&m.params, &map.patches)?)?;
            }
            if lemmas > 0 {
                let band = m.regions.q_i[0].1 - m.regions.q_i[0].0;
                let mut delta = Report::new("linearization bound on random stripes");
                for s in random_stripes(&m, lemmas, band / 4.0, run.seed)? {
                    delta.extend(check_delta_lemma(&m, &s)?);
                }
                let mut smooth = Report::new("smoothing bound on random stripes");
                for s in random_stripes(&m, lemmas, band / 4.0, run.seed.wrapping_add(1))? {
                    smooth.extend(check_smoothing(&m, &s, gamma)?);
                }
                reports.push(delta);
                reports.push(smooth);
            }
            if lipschitz {
                let lip = grid_lipschitz(&m, run.grid.min(100_000));
                let rects = random_rects(&m, run.rectangles, run.seed);
                reports.push(lipschitz_measure_check(&m, &rects, run.mc_points, lip, run.seed));
            }
            finish(&reports, &json)
        }
        Command::Render { model, width, height, steps, window, shade, out } => {
            let m = load_model(&model.model)?;
            let (w, h) = (width as usize, height as usize);
            let chart = *m.chart();
            let uk = m.regions.uk;
            // row 0 is the top of the image
            let seeds: Vec<TorusPoint> = (0..h)
                .flat_map(|row| (0..w).map(move |col| (row, col)))
                .map(|(row, col)| {
                    let (s, t) = ((col as f64 + 0.5) / w as f64, 1.0 - (row as f64 + 0.5) / h as f64);
                    match window {
                        Window::Torus => TorusPoint::new(s, t),
                        Window::Uk => chart.point(uk.x.0 + s * uk.width(), uk.y.0 + t * uk.height()),
                    }
                })
                .collect();
            let level = |t: u64| (254 * t / steps.max(1)).min(254) as u8;
            let mut bytes = format!("P5 {w} {h} 255\n").into_bytes();
            match shade {
                Shade::Entry => bytes.extend(entry_times(&m, &seeds, steps).iter().map(|&(_, cover)| match cover {
                    None => 0,
                    Some(t) => 255 - level(t),
                })),
                Shade::Escape => {
                    let times: Vec<u8> = seeds
                        .par_iter()
                        .map(|p| exit_time(&m, p, steps).map_or(255, level))
                        .collect();
                    bytes.extend(times);
                }
            }
            fs::write(&out, bytes)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(EXIT_CHECKS),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Artifact(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ARTIFACT)
        }
        Err(Failure::Construction(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONSTRUCTION)
        }
    }
}
