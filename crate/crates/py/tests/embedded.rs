use nanotouch::nanotouch;
use pyo3::prelude::*;

#[test]
fn module_works_from_an_embedded_interpreter() {
    pyo3::append_to_inittab!(nanotouch);
    Python::initialize();
    Python::attach(|py| {
        py.run(
            cr#"
import nanotouch as nt
assert abs(nt.equilibrium_gap() - 1.9288215129141317e-10) < 1e-24
cfg = nt.KernelConfig(stiffness=10.0)
curve = nt.quasi_static_sweep(cfg, 3e-9, 1e-9, 2e-11, samples_per_branch=200)
assert curve.events == [], curve.events
assert len(curve.approach) == 200
assert abs(curve.hysteresis_energy()) < 1e-21
try:
    nt.KernelConfig(nonsense=1.0)
    raise SystemExit("unknown field accepted")
except ValueError:
    pass
"#,
            None,
            None,
        )
        .inspect_err(|e| e.print(py))
        .unwrap();
    });
}
