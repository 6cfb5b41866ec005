//! One function per subcommand. Each writes its artifacts through an
//! [`ArtifactWriter`] and returns the summary lines it printed to file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use kernel_ert::analytic::{self, ConcentricSpec, CrownSpec};
use kernel_ert::fem::{energy_identity_defect, power_density, NeumannSolver, COMPATIBILITY_TOLERANCE};
use kernel_ert::ntd::{assemble_ntd_with, difference_operator, BoundaryOperator, NtDMatrix, ZeroMeanBasis};
use kernel_ert::phantom::Shape;
use kernel_ert::reconstruct::{equivalent_radius, jaccard, run_kernel_method};
use kernel_ert::spectral::{decompose_operator, eigendecompose, plateau_estimate, select_eigenindex, weyl_check};
use kernel_ert::{
    build_conductivity, fourier_current, generate_disk_mesh, perturb, truth_indicator, BoundaryCurrent,
    ConductivityField, Error, Mesh, NoiseSpec, Phase, Registry, Result,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, PhaseConfig};
use crate::export::{boundary_pgm, hash_input, indicator_pgm, num, pixel_elements, ArtifactWriter};

/// Ordered `key = value` report.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Summary(pub Vec<(String, String)>);

impl Summary {
    pub fn add(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub summary: Summary,
    /// Hashes of input files read by the command.
    pub inputs: BTreeMap<String, String>,
}

struct Setup {
    mesh: Mesh,
    background: ConductivityField,
    anomalous: ConductivityField,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let mesh = generate_disk_mesh(cfg.mesh.radius.value, cfg.mesh.n_boundary, cfg.n_rings())?;
    let spec = cfg.phantom_spec();
    let background = ConductivityField::uniform(&mesh, spec.background_sigma)?;
    let anomalous = build_conductivity(&mesh, &spec)?;
    Ok(Setup {
        mesh,
        background,
        anomalous,
    })
}

fn element_table(mesh: &Mesh, header: &str, row: impl Fn(usize) -> String) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for t in 0..mesh.n_triangles() {
        let c = mesh.centroid(t);
        let _ = writeln!(s, "{t},{},{},{},{}", num(c[0]), num(c[1]), num(mesh.area(t)), row(t));
    }
    s
}

fn parse_current_file(text: &str, column: usize, n_edges: usize) -> Result<BoundaryCurrent> {
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields[0].parse::<f64>().is_err() && values.is_empty() {
            continue; // header row
        }
        let field = if fields.len() == 1 {
            fields[0]
        } else {
            fields.get(column).copied().unwrap_or("")
        };
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Parse(format!("current file line {}: cannot read '{field}'", lineno + 1)))?;
        values.push(v);
    }
    if values.len() != n_edges {
        return Err(Error::SizeMismatch {
            what: "boundary current file",
            expected: n_edges,
            got: values.len(),
        });
    }
    Ok(BoundaryCurrent::new(values))
}

pub fn cmd_forward(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<CommandOutput> {
    let s = setup(cfg)?;
    let mesh = &s.mesh;
    let lengths = mesh.boundary_lengths();
    let mut inputs = BTreeMap::new();
    let g = match &cfg.forward.current_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("forward.current_file {}: {e}", path.display())))?;
            let (k, h) = hash_input(path)?;
            inputs.insert(k, h);
            let g = parse_current_file(&text, cfg.forward.current_column, mesh.n_boundary())?;
            let violation = g.relative_violation(&lengths);
            if violation > COMPATIBILITY_TOLERANCE {
                let (_, correction) = g.project_zero_mean(&lengths);
                return Err(Error::Config(format!(
                    "forward.current_file: total current violates the zero-mean condition \
                     (relative violation {violation:.3e} > {COMPATIBILITY_TOLERANCE:.0e}); \
                     projecting it would remove a constant of L2 norm {correction:.3e}"
                )));
            }
            g
        }
        None => {
            let phase = match cfg.forward.phase {
                PhaseConfig::Cos => Phase::Cos,
                PhaseConfig::Sin => Phase::Sin,
            };
            fourier_current(mesh, cfg.forward.mode_index, phase)
        }
    };
    let sol = NeumannSolver::new(mesh, &s.anomalous)?.solve(&g)?;
    let p = power_density(mesh, &s.anomalous, &sol.nodal_u)?;

    let mut potential = String::from("node,x,y,u\n");
    for (i, (xy, u)) in mesh.nodes().iter().zip(&sol.nodal_u).enumerate() {
        let _ = writeln!(potential, "{i},{},{},{}", num(xy[0]), num(xy[1]), num(*u));
    }
    out.write("potential.csv", &potential)?;
    let sigma = s.anomalous.values();
    out.write(
        "power.csv",
        &element_table(mesh, "element,cx,cy,area,sigma,power_density", |t| {
            format!("{},{}", num(sigma[t]), num(p.per_element[t]))
        }),
    )?;

    let total = p.total_power(mesh);
    let mean = total / mesh.total_area();
    let spread = p
        .per_element
        .iter()
        .map(|x| (x - mean).abs() / mean)
        .fold(0.0, f64::max);
    let mut summary = Summary::default();
    summary.add(
        "drive",
        cfg.forward.current_file.as_ref().map_or_else(
            || format!("fourier n={} {:?}", cfg.forward.mode_index, cfg.forward.phase).to_lowercase(),
            |p| format!("file {}", p.display()),
        ),
    );
    summary.add("drive_norm_sq", num(g.l2_norm(&lengths).powi(2)));
    summary.add("projection_correction", num(sol.projection_correction));
    summary.add("solve_residual", num(sol.residual));
    summary.add("total_power", num(total));
    summary.add("energy_identity_defect", num(energy_identity_defect(mesh, &p, &sol)));
    summary.add("power_density_max_rel_deviation", num(spread));
    out.write("summary.txt", &summary.render())?;
    Ok(CommandOutput { summary, inputs })
}

struct Operators {
    basis: Arc<ZeroMeanBasis>,
    lam_bg: NtDMatrix,
    lam_d: NtDMatrix,
}

fn operators(s: &Setup, cfg: &ExperimentConfig, inputs: &mut BTreeMap<String, String>) -> Result<Operators> {
    let basis = Arc::new(ZeroMeanBasis::for_mesh(&s.mesh)?);
    let lam_bg = assemble_ntd_with(&NeumannSolver::new(&s.mesh, &s.background)?, basis.clone())?;
    let lam_d = match &cfg.reconstruct.measured_ntd {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("reconstruct.measured_ntd {}: {e}", path.display())))?;
            let (k, h) = hash_input(path)?;
            inputs.insert(k, h);
            NtDMatrix::from_csv(&text, basis.clone())?
        }
        None => assemble_ntd_with(&NeumannSolver::new(&s.mesh, &s.anomalous)?, basis.clone())?,
    };
    Ok(Operators { basis, lam_bg, lam_d })
}

pub fn cmd_ntd(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<CommandOutput> {
    let s = setup(cfg)?;
    let mut inputs = BTreeMap::new();
    let ops = operators(&s, cfg, &mut inputs)?;
    out.write("mesh.txt", &s.mesh.to_text())?;
    out.write("ntd_background.csv", &ops.lam_bg.to_csv())?;
    out.write("ntd_anomaly.csv", &ops.lam_d.to_csv())?;
    let mut summary = Summary::default();
    summary.add("basis", ops.basis.tag());
    summary.add("dimension", ops.basis.dim());
    summary.add("elements", s.mesh.n_triangles());
    summary.add("nodes", s.mesh.n_nodes());
    summary.add("symmetry_defect_background", num(ops.lam_bg.raw_symmetry_defect));
    summary.add("symmetry_defect_anomaly", num(ops.lam_d.raw_symmetry_defect));
    out.write("summary.txt", &summary.render())?;
    Ok(CommandOutput { summary, inputs })
}

fn spectrum_csv(clean: &[f64], noisy: &[f64]) -> String {
    let mut s = String::from("k,lambda,lambda_clean\n");
    for (k, (a, b)) in noisy.iter().zip(clean).enumerate() {
        let _ = writeln!(s, "{},{},{}", k + 1, num(*a), num(*b));
    }
    s
}

pub fn cmd_spectrum(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<CommandOutput> {
    let s = setup(cfg)?;
    let mut inputs = BTreeMap::new();
    let ops = operators(&s, cfg, &mut inputs)?;
    let diff = difference_operator(&ops.lam_d, &ops.lam_bg)?;
    let clean = decompose_operator(&diff)?;
    let noisy = perturb(diff.matrix(), ops.basis.gram(), &cfg.noise_spec())?;
    let dec = eigendecompose(&noisy.matrix, ops.basis.gram(), ops.basis.tag())?;
    out.write("spectrum.csv", &spectrum_csv(&clean.eigenvalues, &dec.eigenvalues))?;

    let lengths = ops.basis.lengths();
    let mut vectors = String::from("edge");
    for k in 0..dec.len() {
        let _ = write!(vectors, ",g{}", k + 1);
    }
    vectors.push('\n');
    let currents: Vec<BoundaryCurrent> = (0..dec.len()).map(|k| dec.current(&ops.basis, k)).collect();
    for e in 0..lengths.len() {
        let _ = write!(vectors, "{e}");
        for g in &currents {
            let _ = write!(vectors, ",{}", num(g.per_edge[e]));
        }
        vectors.push('\n');
    }
    out.write("eigencurrents.csv", &vectors)?;

    let estimator = Registry::default().noise_floor(&cfg.kernel.noise_estimator)?;
    let floor = estimator.estimate(&dec, Some(noisy.delta))?;
    let mut summary = Summary::default();
    summary.add("eta", num(cfg.noise.eta));
    summary.add("seed", cfg.noise.seed);
    summary.add("delta_r", num(noisy.delta_r));
    summary.add("delta", num(noisy.delta));
    summary.add("noise_estimator", estimator.name());
    summary.add("noise_floor", num(floor.value));
    summary.add("plateau_level", num(plateau_estimate(&dec.eigenvalues)?.value));
    summary.add("machine_floor", num(dec.machine_floor()));
    match select_eigenindex(&dec, floor.value, cfg.kernel.safety) {
        Ok(k) => summary.add("k_star", k),
        Err(e) => summary.add("k_star", format!("none ({e})")),
    }
    out.write("summary.txt", &summary.render())?;
    Ok(CommandOutput { summary, inputs })
}

pub fn cmd_reconstruct(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<CommandOutput> {
    let s = setup(cfg)?;
    let mesh = &s.mesh;
    let mut inputs = BTreeMap::new();
    let ops = operators(&s, cfg, &mut inputs)?;
    let kernel = cfg.kernel_config()?;
    let diff = difference_operator(&ops.lam_d, &ops.lam_bg)?;
    let noisy = perturb(diff.matrix(), ops.basis.gram(), &cfg.noise_spec())?;
    let measured = ops.lam_bg.offset(&noisy.matrix)?;
    let estimator = Registry::default().noise_floor(&cfg.kernel.noise_estimator)?;
    let delta = {
        let dec = eigendecompose(&noisy.matrix, ops.basis.gram(), ops.basis.tag())?;
        estimator.estimate(&dec, Some(noisy.delta))?.value
    };
    let res = run_kernel_method(&measured, &ops.lam_bg, delta, &kernel, mesh, &s.background)?;
    let truth = truth_indicator(mesh, &cfg.phantom_spec())?;

    out.write(
        "reconstruction.csv",
        &element_table(mesh, "element,cx,cy,area,power_density,in_region,truth", |t| {
            format!(
                "{},{},{}",
                num(res.power.per_element[t]),
                u8::from(res.region.per_element[t]),
                u8::from(truth.per_element[t])
            )
        }),
    )?;
    let mut curve = String::from("rank,element,power_density,cumulative_power\n");
    for (i, pt) in res.power_curve.iter().enumerate() {
        let _ = writeln!(curve, "{i},{},{},{}", pt.element, num(pt.density), num(pt.cumulative));
    }
    out.write("power_curve.csv", &curve)?;
    let clean = decompose_operator(&diff)?;
    out.write("spectrum.csv", &spectrum_csv(&clean.eigenvalues, &res.spectrum))?;
    let n = cfg.reconstruct.raster_size;
    let pixels = pixel_elements(mesh, n);
    out.write("indicator.pgm", &indicator_pgm(&pixels, n, &res.region))?;
    out.write("truth_boundary.pgm", &boundary_pgm(&pixels, n, &truth))?;

    let mut summary = Summary::default();
    summary.add("k_star", res.k_star);
    summary.add("lambda_k_star", num(res.lambda_k_star));
    summary.add("delta", num(res.delta));
    summary.add("delta_r", num(noisy.delta_r));
    summary.add("epsilon_star", num(res.epsilon_star));
    summary.add("alpha_star", num(res.alpha_star));
    summary.add(
        "cluster",
        res.cluster.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
    );
    summary.add("region_elements", res.region.count());
    summary.add("region_area", num(res.region.area(mesh)));
    summary.add("region_equivalent_radius", num(equivalent_radius(&res.region, mesh)));
    summary.add("truth_area", num(truth.area(mesh)));
    summary.add("jaccard", num(jaccard(&res.region, &truth, mesh)?));
    summary.add("energy_identity_defect", num(res.energy_defect));
    out.write("summary.txt", &summary.render())?;
    Ok(CommandOutput { summary, inputs })
}

fn centred(center: [f64; 2], radius: f64) -> bool {
    center[0].hypot(center[1]) <= 1e-12 * radius
}

pub fn cmd_analytic(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<CommandOutput> {
    let spec = cfg.phantom_spec();
    let radius = cfg.mesh.radius.value;
    let sb = spec.background_sigma;
    let mut summary = Summary::default();
    let mut table;
    match spec.anomalies.as_slice() {
        [] => {
            summary.add("configuration", "homogeneous");
            table = String::from("n,disk_eigenvalue\n");
            for n in 1..=cfg.analytic.n_max {
                let _ = writeln!(table, "{n},{}", num(analytic::disk_ntd_eigenvalue(n, radius, sb)));
            }
        }
        [a] => match a.shape {
            Shape::Disk { center, radius: ri } if centred(center, radius) => {
                let c = ConcentricSpec {
                    r_i: ri,
                    radius,
                    sigma_a: a.sigma,
                    sigma_bg: sb,
                };
                c.validate()?;
                summary.add("configuration", "concentric");
                table = String::from(
                    "n,disk_eigenvalue,lambda,reconstructed_radius,reconstructed_radius_arclength,anomaly_power\n",
                );
                for n in 1..=cfg.analytic.n_max {
                    let lam = analytic::concentric_lambda(n, &c);
                    let _ = writeln!(
                        table,
                        "{n},{},{},{},{},{}",
                        num(analytic::disk_ntd_eigenvalue(n, radius, sb)),
                        num(lam),
                        num(analytic::reconstructed_radius(n, lam, radius, sb)),
                        num(analytic::reconstructed_radius_unit(n, lam, radius, sb)),
                        num(analytic::concentric_anomaly_power(n, &c)),
                    );
                }
                summary.add("lambda_1", num(analytic::concentric_lambda(1, &c)));
            }
            Shape::Annulus {
                center,
                r_inner,
                r_outer,
            } if centred(center, radius) => {
                let c = CrownSpec {
                    r1: r_inner,
                    r2: r_outer,
                    r3: radius,
                    sigma_a: a.sigma,
                    sigma_bg: sb,
                };
                c.validate()?;
                summary.add("configuration", "crown");
                table = String::from("n,disk_eigenvalue,lambda,outer_radius,outer_radius_arclength\n");
                for n in 1..=cfg.analytic.n_max {
                    let lam = analytic::crown_lambda(n, &c);
                    let _ = writeln!(
                        table,
                        "{n},{},{},{},{}",
                        num(analytic::disk_ntd_eigenvalue(n, radius, sb)),
                        num(lam),
                        num(analytic::crown_outer_radius(n, lam, radius, sb)),
                        num(analytic::crown_outer_radius_unit(n, lam, radius, sb)),
                    );
                }
            }
            _ => {
                return Err(Error::Config(
                    "analytic: closed forms exist only for a centred disk or a centred annulus".into(),
                ))
            }
        },
        _ => {
            return Err(Error::Config(
                "analytic: closed forms exist only for a single centred anomaly".into(),
            ))
        }
    }
    summary.add("n_max", cfg.analytic.n_max);
    out.write("analytic.csv", &table)?;
    out.write("summary.txt", &summary.render())?;
    Ok(CommandOutput {
        summary,
        inputs: BTreeMap::new(),
    })
}

struct Cell {
    eta: f64,
    seed: u64,
    delta: f64,
    delta_r: f64,
    noise_norm_l2: f64,
    noise_norm_coord: f64,
    plateau: f64,
    has_plateau: bool,
    weyl_deviation: f64,
    weyl_pass: bool,
    spectrum: Vec<f64>,
}

pub fn cmd_noise_sweep(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<CommandOutput> {
    let s = setup(cfg)?;
    let mut inputs = BTreeMap::new();
    let ops = operators(&s, cfg, &mut inputs)?;
    let diff = difference_operator(&ops.lam_d, &ops.lam_bg)?;
    let clean = decompose_operator(&diff)?;
    let gram = ops.basis.gram();
    let jobs: Vec<(f64, u64)> = cfg
        .sweep
        .etas
        .iter()
        .flat_map(|&eta| (0..cfg.sweep.n_seeds).map(move |i| (eta, cfg.noise.seed + i)))
        .collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(eta, seed)| {
            let p = perturb(diff.matrix(), gram, &NoiseSpec { eta, seed })?;
            let dec = eigendecompose(&p.matrix, gram, ops.basis.tag())?;
            let floor = plateau_estimate(&dec.eigenvalues)?;
            let weyl = weyl_check(&clean.eigenvalues, &dec.eigenvalues, p.delta)?;
            Ok(Cell {
                eta,
                seed,
                delta: p.delta,
                delta_r: p.delta_r,
                noise_norm_l2: p.noise_norm_l2,
                noise_norm_coord: p.noise_norm_coord,
                plateau: floor.value,
                has_plateau: floor.plateau,
                weyl_deviation: weyl.max_deviation,
                weyl_pass: weyl.pass,
                spectrum: dec.eigenvalues,
            })
        })
        .collect::<Result<_>>()?;

    let mut report = String::from(
        "eta,seed,delta,delta_r,noise_norm_l2,noise_norm_coord,plateau,plateau_detected,plateau_over_delta,weyl_max_deviation,weyl_pass\n",
    );
    for c in &cells {
        let _ = writeln!(
            report,
            "{},{},{},{},{},{},{},{},{},{},{}",
            num(c.eta),
            c.seed,
            num(c.delta),
            num(c.delta_r),
            num(c.noise_norm_l2),
            num(c.noise_norm_coord),
            num(c.plateau),
            c.has_plateau,
            if c.delta > 0.0 {
                num(c.plateau / c.delta)
            } else {
                "nan".into()
            },
            num(c.weyl_deviation),
            c.weyl_pass
        );
        out.write(
            &format!("spectra/eta_{}_seed_{}.csv", num(c.eta), c.seed),
            &spectrum_csv(&clean.eigenvalues, &c.spectrum),
        )?;
    }
    out.write("plateau_report.csv", &report)?;

    // one column per eta, first seed, next to the clean spectrum
    let firsts: Vec<&Cell> = cells.iter().filter(|c| c.seed == cfg.noise.seed).collect();
    let mut overlay = String::from("k,clean");
    for c in &firsts {
        let _ = write!(overlay, ",eta_{}", num(c.eta));
    }
    overlay.push('\n');
    for k in 0..clean.len() {
        let _ = write!(overlay, "{},{}", k + 1, num(clean.eigenvalues[k].abs()));
        for c in &firsts {
            let _ = write!(overlay, ",{}", num(c.spectrum[k].abs()));
        }
        overlay.push('\n');
    }
    out.write("overlay.csv", &overlay)?;

    let mut summary = Summary::default();
    summary.add("cells", cells.len());
    let clean_floor = plateau_estimate(&clean.eigenvalues)?;
    summary.add("clean_tail_level", num(clean_floor.value));
    summary.add("clean_machine_floor", num(clean.machine_floor()));
    summary.add(
        "clean_plateau_above_machine_floor",
        clean_floor.plateau && clean_floor.value > clean.machine_floor(),
    );
    for &eta in &cfg.sweep.etas {
        let group: Vec<&Cell> = cells.iter().filter(|c| c.eta == eta).collect();
        let mut ratios: Vec<f64> = group
            .iter()
            .filter(|c| c.delta > 0.0)
            .map(|c| c.plateau / c.delta)
            .collect();
        ratios.sort_by(f64::total_cmp);
        let passes = group.iter().filter(|c| c.weyl_pass).count();
        let key = num(eta);
        if let Some(&median) = ratios.get(ratios.len() / 2) {
            summary.add(&format!("eta_{key}_median_plateau_over_delta"), num(median));
        }
        summary.add(&format!("eta_{key}_weyl_pass"), format!("{passes}/{}", group.len()));
    }
    out.write("summary.txt", &summary.render())?;
    Ok(CommandOutput { summary, inputs })
}
