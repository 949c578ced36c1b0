use std::ffi::CStr;
use std::ptr;

use dampwave_ffi::*;

fn profile(kind: DwProfileKind) -> DwProfile {
    DwProfile {
        kind,
        level: 1.0,
        width: 0.25,
        center_x: 0.5,
        center_y: 0.5,
        radius: 0.3,
    }
}

fn lab(n: usize, law: DwLaw, kind: DwProfileKind) -> *mut DwLab {
    let mut lab = ptr::null_mut();
    let p = profile(kind);
    assert_eq!(unsafe { dw_lab_new(n, n, 1.0, 1.0, law, &p, &mut lab) }, DwStatus::Ok);
    assert!(!lab.is_null());
    lab
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe { dw_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn state_dim(lab: *const DwLab) -> usize {
    let mut n = 0;
    assert_eq!(unsafe { dw_lab_state_dim(lab, &mut n) }, DwStatus::Ok);
    n
}

fn data(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect()
}

#[test]
fn generator_is_dissipative_through_the_abi() {
    let l = lab(6, DwLaw::Brinkman, DwProfileKind::BoundaryCollar);
    let n = state_dim(l);
    assert_eq!(n, 3 * 36 - 12);
    let z = data(n);
    let mut az = vec![0.0; n];
    assert_eq!(unsafe { dw_lab_apply_generator(l, z.as_ptr(), n, az.as_mut_ptr(), n) }, DwStatus::Ok);
    // <A z, z> = -<D u, u> <= 0 with cell-area weights
    let h2 = 1.0 / 36.0;
    let form: f64 = h2 * z.iter().zip(&az).map(|(a, b)| a * b).sum::<f64>();
    assert!(form < 0.0);
    unsafe { dw_lab_free(l) };
}

#[test]
fn simulation_matches_the_library() {
    use dampwave::damping::{sample_profile, DampingLaw, DampingProfile};
    use dampwave::grid::{Grid, State};
    use dampwave::helmholtz::{HelmholtzSolver, SolverMode};
    use dampwave::semigroup::{simulate, EvolutionConfig};

    let l = lab(6, DwLaw::Modified, DwProfileKind::BoundaryCollar);
    let n = state_dim(l);
    let z = data(n);
    let mut e = vec![0.0; 51];
    let mut zf = vec![0.0; n];
    let s = unsafe { dw_lab_simulate(l, z.as_ptr(), n, 0.02, 50, e.as_mut_ptr(), e.len(), zf.as_mut_ptr()) };
    assert_eq!(s, DwStatus::Ok, "{}", last_error());
    unsafe { dw_lab_free(l) };

    let g = Grid::unit(6).unwrap();
    let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
    let a = sample_profile(&DampingProfile::BoundaryCollar { level: 1.0, width: 0.25 }, &g).unwrap();
    let cfg = EvolutionConfig {
        state_stride: 50,
        ..EvolutionConfig::new(0.02, 50, DampingLaw::Modified)
    };
    let tr = simulate(&State::from_slice(&g, &z).unwrap(), &cfg, &a, &h).unwrap();
    assert_eq!(tr.energies, e);
    assert_eq!(tr.final_state().unwrap().to_vec(), zf);
}

fn library_resolvent_norm(beta: f64) -> f64 {
    use dampwave::damping::{sample_profile, DampingLaw, DampingProfile};
    use dampwave::grid::Grid;
    use dampwave::helmholtz::{HelmholtzSolver, SolverMode};
    use dampwave::spectral::{assemble, eigen, resolvent_norm, ReducedGenerator, DEFAULT_DENSE_CAP};

    let g = Grid::unit(6).unwrap();
    let h = HelmholtzSolver::new(&g, SolverMode::Auto).unwrap();
    let a = sample_profile(&DampingProfile::Constant { level: 1.0 }, &g).unwrap();
    let m = assemble(&g, &a, DampingLaw::Brinkman, &h, DEFAULT_DENSE_CAP).unwrap();
    let rep = eigen(&m, &a).unwrap();
    let red = ReducedGenerator::new(&m, rep.kernel.as_ref().unwrap());
    resolvent_norm(&red, beta).unwrap().resolvent_norm
}

#[test]
fn resolvent_and_observability_are_positive() {
    let l = lab(6, DwLaw::Brinkman, DwProfileKind::Constant);
    let mut r = 0.0;
    assert_eq!(unsafe { dw_lab_resolvent_norm(l, 3.0, &mut r) }, DwStatus::Ok);
    assert!(r.is_finite() && r > 0.0);
    assert_eq!(r, library_resolvent_norm(3.0));
    let mut again = 0.0;
    assert_eq!(unsafe { dw_lab_resolvent_norm(l, 3.0, &mut again) }, DwStatus::Ok);
    assert_eq!(r, again);
    let mut c = 0.0;
    assert_eq!(unsafe { dw_lab_observability_constant(l, 4.0, -1.0, &mut c) }, DwStatus::Ok);
    assert!(c > 0.0);
    unsafe { dw_lab_free(l) };
}

#[test]
fn errors_are_codes_with_messages() {
    let mut out = ptr::null_mut();
    let p = profile(DwProfileKind::BoundaryCollar);
    assert_eq!(unsafe { dw_lab_new(0, 4, 1.0, 1.0, DwLaw::Brinkman, &p, &mut out) }, DwStatus::InvalidArgument);
    assert!(out.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { dw_lab_new(4, 4, 1.0, 1.0, DwLaw::Brinkman, ptr::null(), &mut out) }, DwStatus::NullPointer);
    let mut n = 0;
    assert_eq!(unsafe { dw_lab_state_dim(ptr::null(), &mut n) }, DwStatus::NullPointer);

    let l = lab(4, DwLaw::Brinkman, DwProfileKind::Zero);
    let n = state_dim(l);
    let z = data(n);
    let mut e = 0.0;
    assert_eq!(unsafe { dw_lab_energy(l, z.as_ptr(), n - 1, &mut e) }, DwStatus::InvalidArgument);
    assert!(last_error().contains("expected"));
    let mut small = vec![0.0; 3];
    assert_eq!(
        unsafe { dw_lab_simulate(l, z.as_ptr(), n, 0.01, 10, small.as_mut_ptr(), small.len(), ptr::null_mut()) },
        DwStatus::BufferTooSmall
    );
    assert_eq!(unsafe { dw_lab_energy(l, z.as_ptr(), n, &mut e) }, DwStatus::Ok);
    assert!(e > 0.0);
    assert!(last_error().is_empty());

    // a required length probe with a null buffer
    assert_eq!(unsafe { dw_lab_energy(l, z.as_ptr(), 1, &mut e) }, DwStatus::InvalidArgument);
    let len = unsafe { dw_last_error_message(ptr::null_mut(), 0) };
    assert_eq!(len, last_error().len());
    unsafe { dw_lab_free(l) };
    unsafe { dw_lab_free(ptr::null_mut()) };
}

#[test]
fn dense_cap_is_reported() {
    let l = lab(48, DwLaw::Modified, DwProfileKind::BoundaryCollar);
    let mut r = 0.0;
    assert_eq!(unsafe { dw_lab_resolvent_norm(l, 1.0, &mut r) }, DwStatus::CapacityExceeded);
    unsafe { dw_lab_free(l) };
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(dw_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    assert_eq!(dw_status_ok(DwStatus::Ok), 1);
    assert_eq!(dw_status_ok(DwStatus::Panic), 0);
}
