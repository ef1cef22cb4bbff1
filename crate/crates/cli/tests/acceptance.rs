//! End-to-end acceptance suite. Each test covers one release criterion and
//! prints a single PASS/FAIL line; tolerances are pinned in the constants
//! below. Library criteria run in-process, CLI criteria drive the `mqv`
//! binary.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::Command;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mqv_core::curve::{from_components, DimensionVector};
use mqv_core::diagrams::{self, PhiPsiDiagram, UVDiagram};
use mqv_core::linalg::{self, ComplexMatrix, ToleranceConfig};
use mqv_core::mpa::{self, Representation};
use mqv_core::qham::{self, QHSpace};

const FT_TOL: f64 = 1e-10;
const RH_MONODROMY_TOL: f64 = 1e-10;
const RH_ROUNDTRIP_TOL: f64 = 1e-8;
const ASSEMBLY_TOL: f64 = 1e-12;
const FIBER_TOL: f64 = 1e-10;
const GLUE_TOL: f64 = 1e-10;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_mat(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        c(
            scale * (r.gen::<f64>() * 2.0 - 1.0),
            scale * (r.gen::<f64>() * 2.0 - 1.0),
        )
    })
}

fn verdict(name: &str, pass: bool) {
    println!(
        "criterion {name}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {name} failed");
}

fn rel_err(got: &ComplexMatrix, want: &ComplexMatrix) -> f64 {
    let denom = want.frobenius_norm().max(1.0);
    (got - want).frobenius_norm() / denom
}

/// 1 + ab on Ψ for a diagram.
fn t_psi(d: &PhiPsiDiagram) -> ComplexMatrix {
    &ComplexMatrix::identity(d.dim_psi()) + &(&d.a * &d.b)
}

/// 1 + ba on Φ.
fn t_phi(d: &PhiPsiDiagram) -> ComplexMatrix {
    &ComplexMatrix::identity(d.dim_phi()) + &(&d.b * &d.a)
}

fn random_diagram(r: &mut ChaCha8Rng, dim_phi: usize, dim_psi: usize) -> PhiPsiDiagram {
    let s = 0.5 / ((dim_phi.max(dim_psi)) as f64).sqrt();
    PhiPsiDiagram::new(
        rand_mat(r, dim_psi, dim_phi, s),
        rand_mat(r, dim_phi, dim_psi, s),
    )
    .unwrap()
}

#[test]
fn criterion_01_cluster_identity() {
    let cfg = ToleranceConfig::default();
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for dim_phi in 1..=6 {
        for dim_psi in 1..=6 {
            for seed in 0..3 {
                let mut r = rng(1000 + 100 * dim_phi as u64 + 10 * dim_psi as u64 + seed);
                let d = random_diagram(&mut r, dim_phi, dim_psi);
                let ft = diagrams::ft_j(&d, &cfg).unwrap();
                let inv_phi = linalg::inverse(&t_phi(&d)).unwrap();
                let inv_psi = linalg::inverse(&t_psi(&d)).unwrap();
                worst = worst
                    .max(rel_err(&t_psi(&ft), &inv_phi))
                    .max(rel_err(&t_phi(&ft), &inv_psi));
                samples += 1;
            }
        }
    }
    assert!(samples >= 100);
    verdict("01 cluster-identity", worst < FT_TOL);
}

#[test]
fn criterion_02_ft_square_antipodal() {
    let cfg = ToleranceConfig::default();
    let mut worst: f64 = 0.0;
    for dim_phi in 1..=4 {
        for dim_psi in 1..=4 {
            for seed in 0..4 {
                let mut r = rng(2000 + 100 * dim_phi as u64 + 10 * dim_psi as u64 + seed);
                let d = random_diagram(&mut r, dim_phi, dim_psi);
                let d2 = diagrams::ft_j(&diagrams::ft_j(&d, &cfg).unwrap(), &cfg).unwrap();
                // (p,q) = (1, 1+ab): ft² → antipodal intertwiner
                let q = t_psi(&d);
                worst = worst
                    .max(rel_err(&d.a.scale(c(-1.0, 0.0)), &(&q * &d2.a)))
                    .max(rel_err(&(&d.b.scale(c(-1.0, 0.0)) * &q), &d2.b));
                // ft⁴ → identity via the composed isomorphism (1, (1+ab)(1+a₂b₂))
                let d4 = diagrams::ft_j(&diagrams::ft_j(&d2, &cfg).unwrap(), &cfg).unwrap();
                let q_tot = &q * &t_psi(&d2);
                worst = worst
                    .max(rel_err(&d.a, &(&q_tot * &d4.a)))
                    .max(rel_err(&(&d.b * &q_tot), &d4.b));
            }
        }
    }
    verdict("02 ft-square-antipodal", worst < FT_TOL);
}

#[test]
fn criterion_03_malgrange_laws() {
    let cfg = ToleranceConfig::default();
    let mut worst_law: f64 = 0.0;
    let mut worst_round: f64 = 0.0;
    let mut samples = 0;
    for n in 1..=4usize {
        for seed in 0..25 {
            let mut r = rng(3000 + 10 * n as u64 + seed);
            // vu with controlled spectrum: S·D·S^{-1}, eigenvalues in the
            // open box (0.05,0.95) × (−1,1)
            let d = ComplexMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    c(
                        0.05 + 0.9 * r.gen::<f64>(),
                        2.0 * r.gen::<f64>() - 1.0,
                    )
                } else {
                    c(0.0, 0.0)
                }
            });
            let s = &ComplexMatrix::identity(n) + &rand_mat(&mut r, n, n, 0.3);
            let vu = &(&s * &d) * &linalg::inverse(&s).unwrap();
            let uv = UVDiagram::new(ComplexMatrix::identity(n), vu.clone()).unwrap();
            let j = diagrams::malgrange_to_j(&uv, &cfg).unwrap();
            let exp_vu = linalg::matrix_function_cfg(
                &vu.scale(linalg::TWO_PI_I),
                linalg::ScalarFunction::Exp,
                &cfg,
            )
            .unwrap();
            worst_law = worst_law.max(rel_err(&t_phi(&j), &exp_vu));
            let back = diagrams::malgrange_from_j(&j, &cfg).unwrap();
            worst_round = worst_round
                .max((&back.u - &uv.u).frobenius_norm())
                .max((&back.v - &uv.v).frobenius_norm());
            samples += 1;
        }
    }
    assert_eq!(samples, 100);
    verdict(
        "03 malgrange-laws",
        worst_law < RH_MONODROMY_TOL && worst_round < RH_ROUNDTRIP_TOL,
    );
}

fn mqv() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mqv"))
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn write_json<T: serde::Serialize>(name: &str, value: &T) -> PathBuf {
    let p = tmp(name);
    std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

#[test]
fn criterion_04_a2_cli_exit_codes() {
    // two rational components joined at one node, q = 1, dims (1,1)
    let graph = from_components(&[(0, 0), (0, 0)], &[(0, 1)], c(1.0, 0.0), &[]).unwrap();
    let dims = DimensionVector::uniform(&graph, 1);
    let gp = write_json("a2_graph.json", &graph);
    let zero = Representation::zero(&graph, &dims).unwrap();
    let zp = write_json("a2_zero_rep.json", &zero);
    let status = mqv()
        .args(["validate-rep", "--graph"])
        .arg(&gp)
        .arg("--rep")
        .arg(&zp)
        .arg("--quiet")
        .status()
        .unwrap();
    let mut pass = status.code() == Some(0);
    // any representation with ‖ab‖ > 1e-6 must fail
    for seed in 0..5u64 {
        let mut rep = zero.clone();
        let mut r = rng(4000 + seed);
        let (a, b) = loop {
            let a = rand_mat(&mut r, 1, 1, 0.5);
            let b = rand_mat(&mut r, 1, 1, 0.5);
            if (&a * &b).frobenius_norm() > 1e-6 {
                break (a, b);
            }
        };
        rep.a.insert(0, a);
        rep.b.insert(0, b);
        let rp = write_json(&format!("a2_bad_rep_{seed}.json"), &rep);
        let status = mqv()
            .args(["validate-rep", "--graph"])
            .arg(&gp)
            .arg("--rep")
            .arg(&rp)
            .arg("--quiet")
            .status()
            .unwrap();
        pass &= status.code() == Some(1);
    }
    verdict("04 a2-cli-exit-codes", pass);
}

#[test]
fn criterion_05_qh_axioms() {
    let cfg = ToleranceConfig::default();
    let mut spaces: Vec<QHSpace> = Vec::new();
    for n in 1..=2 {
        spaces.push(qham::double(n).unwrap());
        spaces.push(qham::fused_double(n).unwrap());
        spaces.push(
            qham::extrinsic_fuse(qham::double(n).unwrap(), qham::double(n).unwrap(), 1, 0)
                .unwrap(),
        );
    }
    for n1 in 1..=2 {
        for n2 in 1..=2 {
            spaces.push(qham::vdb_space(n1, n2).unwrap());
        }
    }
    let mut pass = true;
    for (k, sp) in spaces.iter().enumerate() {
        let report = qham::check_qh_axioms(sp, 20, 4, 500 + k as u64, &cfg).unwrap();
        if !report.pass() {
            eprintln!("axiom failure on {}: {report:?}", sp.name);
            pass = false;
        }
    }
    verdict("05 qh-axioms", pass);
}

#[test]
fn criterion_06_assembly_correctness() {
    let mut worst: f64 = 0.0;
    for g_handles in 1..=3u32 {
        for n in 1..=3usize {
            let graph = from_components(&[(g_handles, 0)], &[], c(1.0, 0.0), &[]).unwrap();
            let asm = qham::assemble_moduli(&graph, &DimensionVector::uniform(&graph, n)).unwrap();
            let mut r = rng(6000 + 10 * g_handles as u64 + n as u64);
            for _ in 0..50 {
                let x = asm.space.random_point(&mut r, 0.2);
                let m = asm.space.moment(&x).unwrap();
                let mut direct = ComplexMatrix::identity(n);
                for h in 0..g_handles as usize {
                    let (a, b) = (&x[2 * h], &x[2 * h + 1]);
                    let comm = &(&(a * b) * &linalg::inverse(a).unwrap())
                        * &linalg::inverse(b).unwrap();
                    direct = &direct * &comm;
                }
                worst = worst.max((&m[0] - &direct).frobenius_norm());
            }
        }
    }
    // the two-component one-node space carries the two-sided moment
    // ((1+ab)^{-1}, 1+ba) literally
    let graph = from_components(&[(0, 0), (0, 0)], &[(0, 1)], c(1.0, 0.0), &[]).unwrap();
    let asm = qham::assemble_moduli(&graph, &DimensionVector::uniform(&graph, 1)).unwrap();
    let (a, b) = (c(0.37, 0.12), c(-0.21, 0.44));
    let m = asm
        .space
        .moment(&vec![ComplexMatrix::scalar(a), ComplexMatrix::scalar(b)])
        .unwrap();
    let exact = m[0][(0, 0)] == (c(1.0, 0.0) + a * b).inv() && m[1][(0, 0)] == c(1.0, 0.0) + b * a;
    verdict("06 assembly-correctness", worst < ASSEMBLY_TOL && exact);
}

#[test]
fn criterion_07_pauli_fiber() {
    let space = qham::fused_double(2).unwrap();
    let minus_e = vec![ComplexMatrix::identity(2).scale(c(-1.0, 0.0))];
    let sol = qham::solve_moment_fiber(&space, &minus_e, 11, 120).unwrap();
    let converges = sol.success && sol.residual < FIBER_TOL;
    // det[A,B] = 1 for all (A,B), while det(i·e) = −1: no solution exists
    let i_e = vec![ComplexMatrix::identity(2).scale(c(0.0, 1.0))];
    let obstructed = qham::solve_moment_fiber(&space, &i_e, 11, 120).unwrap();
    verdict("07 pauli-fiber", converges && !obstructed.success);
}

#[test]
fn criterion_08_reduction_sanity() {
    let cfg = ToleranceConfig::default();
    let genus2 = {
        let graph = from_components(&[(2, 0)], &[], c(1.0, 0.0), &[]).unwrap();
        qham::assemble_moduli(&graph, &DimensionVector::uniform(&graph, 1))
            .unwrap()
            .space
    };
    let configs = vec![
        qham::fused_double(1).unwrap(),
        qham::fused_double(2).unwrap(),
        genus2,
    ];
    let mut pass = true;
    for sp in &configs {
        let gauged: Vec<usize> = (0..sp.slot_count()).collect();
        let mut dims = BTreeSet::new();
        for seed in 0..10u64 {
            let sol = qham::solve_moment_fiber(sp, &sp.identity_tuple(), seed, 120).unwrap();
            if !sol.success {
                eprintln!("{}: solver failed at seed {seed}", sp.name);
                pass = false;
                continue;
            }
            let x = sol.point.unwrap();
            // ambient nondegeneracy
            let gram = qham::omega_gram(sp, &x).unwrap();
            if linalg::rank(&gram, &cfg) != sp.dim {
                eprintln!("{}: ambient form degenerate at seed {seed}", sp.name);
                pass = false;
            }
            let report = qham::reduction_report(sp, &x, &gauged, &cfg).unwrap();
            if report.reduced_dim % 2 != 0
                || report.reduced_form_rank != report.reduced_dim
                || !report.nondegenerate
            {
                eprintln!("{}: bad reduction at seed {seed}: {report:?}", sp.name);
                pass = false;
            }
            dims.insert(report.reduced_dim);
        }
        if dims.len() != 1 {
            eprintln!("{}: reduced dims vary across seeds: {dims:?}", sp.name);
            pass = false;
        }
    }
    verdict("08 reduction-sanity", pass);
}

#[test]
fn criterion_09_expand_glue_roundtrip() {
    let cfg = ToleranceConfig::default();
    let q = c(0.8, 0.6); // unit-modulus, infinite order
    let graphs = vec![
        from_components(&[(0, 0), (0, 0)], &[(0, 1)], q, &[]).unwrap(),
        from_components(&[(0, 0), (0, 0), (0, 0)], &[(0, 1), (1, 2), (2, 0)], q, &[]).unwrap(),
        from_components(&[(1, 0), (0, 1)], &[(0, 1), (0, 1)], q, &[1]).unwrap(),
        from_components(&[(1, 1), (0, 0), (0, -1)], &[(0, 1), (1, 2), (0, 2), (2, 2)], q, &[0])
            .unwrap(),
        from_components(&[(2, 0)], &[(0, 0)], q, &[]).unwrap(),
    ];
    let mut pass = true;
    let mut samples = 0;
    for (gi, g) in graphs.iter().enumerate() {
        let mut dims = DimensionVector::uniform(g, 2);
        for v in g.vertices.iter().filter(|v| v.framed) {
            dims.w.insert(v.id, 1);
        }
        for seed in 0..20u64 {
            let rep = mpa::random_representation(g, &dims, 900 + 100 * gi as u64 + seed, 0.3)
                .unwrap();
            let model = mpa::expand_all(&rep, g, &cfg).unwrap();
            let back = mpa::glue_from_local(g, &model, &cfg).unwrap();
            let mut defect: f64 = 0.0;
            for (e, a) in &rep.a {
                defect = defect.max((&back.a[e] - a).frobenius_norm());
            }
            for (e, b) in &rep.b {
                defect = defect.max((&back.b[e] - b).frobenius_norm());
            }
            if defect >= GLUE_TOL {
                eprintln!("graph {gi} seed {seed}: roundtrip defect {defect:.3e}");
                pass = false;
            }
            // local monodromy products agree with the global relation check
            let global = mpa::check_relations(&rep, g, &cfg).unwrap();
            for v in &g.vertices {
                let local = mpa::local_relation_residual(&model, g, v.id).unwrap();
                let diff = (&local - &global.residuals[&v.id]).frobenius_norm();
                if diff >= GLUE_TOL {
                    eprintln!("graph {gi} seed {seed} vertex {}: product defect {diff:.3e}", v.id);
                    pass = false;
                }
            }
            samples += 1;
        }
    }
    assert_eq!(samples, 100);
    verdict("09 expand-glue-roundtrip", pass);
}

#[test]
fn criterion_10_cli_determinism() {
    // fixtures
    let graph = from_components(&[(0, 0), (0, 0)], &[(0, 1)], c(1.0, 0.0), &[]).unwrap();
    let dims = DimensionVector::uniform(&graph, 1);
    let gp = write_json("det_graph.json", &graph);
    let dp = write_json("det_dims.json", &dims);
    let rep = mpa::random_representation(&graph, &dims, 5, 0.3).unwrap();
    let rp = write_json("det_rep.json", &rep);
    let model = mpa::expand_all(&rep, &graph, &ToleranceConfig::default()).unwrap();
    let lp = write_json("det_local.json", &model);
    let mut r = rng(42);
    let uv = UVDiagram::new(rand_mat(&mut r, 2, 2, 0.3), rand_mat(&mut r, 2, 2, 0.3)).unwrap();
    let uvp = write_json("det_uv.json", &mqv_core::diagrams::Diagram::Uv(uv));
    let d = random_diagram(&mut r, 2, 2);
    let pp = write_json("det_phipsi.json", &mqv_core::diagrams::Diagram::PhiPsi(d));
    let asm = qham::assemble_moduli(&graph, &dims).unwrap();
    let ap = write_json("det_asm.json", &asm);

    let s = |p: &PathBuf| p.to_str().unwrap().to_string();
    let invocations: Vec<Vec<String>> = vec![
        vec!["validate-rep".into(), "--graph".into(), s(&gp), "--rep".into(), s(&rp)],
        vec!["ft".into(), "--diagram".into(), s(&pp), "--mode".into(), "j".into(), "--times".into(), "3".into()],
        vec!["rh".into(), "--node".into(), s(&uvp), "--direction".into(), "to-betti".into()],
        vec!["glue".into(), "--graph".into(), s(&gp), "--local".into(), s(&lp)],
        vec!["expand".into(), "--graph".into(), s(&gp), "--rep".into(), s(&rp)],
        vec!["qh-check".into(), "--space".into(), "vdb(1,2)".into(), "--points".into(), "2".into(), "--triples".into(), "2".into(), "--seed".into(), "9".into()],
        vec!["qh-check".into(), "--space".into(), s(&ap), "--points".into(), "2".into(), "--triples".into(), "2".into(), "--seed".into(), "9".into()],
        vec!["assemble".into(), "--graph".into(), s(&gp), "--dims".into(), s(&dp)],
        vec!["solve-fiber".into(), "--space".into(), "double(1)".into(), "--seed".into(), "3".into()],
        vec!["reduce".into(), "--space".into(), "fused_double(1)".into(), "--seed".into(), "3".into()],
        vec!["randgen".into(), "--graph".into(), s(&gp), "--dims".into(), s(&dp), "--seed".into(), "17".into()],
    ];
    let mut pass = true;
    for args in &invocations {
        let run = || mqv().args(args).output().unwrap();
        let (o1, o2) = (run(), run());
        if o1.stdout != o2.stdout || o1.status.code() != o2.status.code() {
            eprintln!("nondeterministic output for {:?}", args[0]);
            pass = false;
        }
        if o1.stdout.is_empty() {
            eprintln!("no report emitted for {:?}", args[0]);
            pass = false;
        }
    }
    verdict("10 cli-determinism", pass);
}
