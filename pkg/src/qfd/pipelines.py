"""Scenario pipelines: wire propagation, decomposition, trajectories, and
reduced dynamics into artifact directories with reproducibility manifests."""

import hashlib
import json
import os
import time

import numpy as np

from . import __version__, fieldio
from .config import (ConfigValidationError, build_functional_numbers,
                     build_grid, build_grid2d, build_initial_spec,
                     build_interaction, build_potential,
                     build_propagator_numbers, build_trajectory_numbers)
from .fields import ComplexField, RealField
from .grids import PERIODIC
from .hydrodynamics import continuity_residual, decompose, save_bundle
from .manybody import (HartreeState, TwoBodyState, compare_runs_csv,
                       per_particle_trajectories, propagate_full,
                       propagate_hartree, symmetrize)
from .potentials import PotentialSpec
from .propagator import (PropagatorConfig, RunLogWriter, SnapshotRecorder,
                         default_dt, propagate)
from .qfdft import (FunctionalConfig, OrbitalSet, density, propagate_ks,
                    stationary_limit, write_density_current_csv,
                    write_diagnostics_csv)
from .reduced import purity, reduce_to_particle, reduced_trajectories
from .states import gaussian_packet, harmonic_eigenstate, plane_wave, product_state
from .trajectories import (SnapshotVelocityField, integrate_trajectories,
                           sample_trajectory_set, save_trajectories_csv)


def _build_initial_field(grid, spec, potential):
    family = spec["family"]
    if family == "gaussian":
        return gaussian_packet(grid, float(spec["sigma"]),
                               float(spec.get("center", 0.0)),
                               float(spec.get("momentum", 0.0)))
    if family == "harmonic_eigenstate":
        if potential.kind != "harmonic":
            raise ConfigValidationError(
                "initial.family harmonic_eigenstate requires potential.kind harmonic")
        return harmonic_eigenstate(grid, int(spec["n"]),
                                   omega=potential.params["omega"],
                                   center=potential.params["center"])
    if family == "plane_wave":
        if grid.boundary != PERIODIC:
            raise ConfigValidationError("initial.family plane_wave requires a periodic grid")
        psi, _ = plane_wave(grid, int(spec["mode"]))
        return psi
    if family == "file":
        f = fieldio.load_field(spec["path"])
        if f.grid != grid:
            raise ConfigValidationError(
                f"initial.path grid does not match [grid] ({f.grid} != {grid})")
        return ComplexField(grid, np.asarray(f.values, dtype=np.complex128)).normalize()
    raise ConfigValidationError(f"unknown initial family {family!r}")


def _propagator_config(cfg, grid):
    sec = build_propagator_numbers(cfg)
    dt = float(sec.get("dt", default_dt(grid, sec["mass"])))
    applied_default_dt = "dt" not in sec
    pc = PropagatorConfig(dt=dt, scheme=sec["scheme"], mass=sec["mass"],
                          t_final=sec["t_final"],
                          absorbing=bool(sec.get("absorbing", False)),
                          cap_strength=float(sec.get("cap_strength", 1.0)),
                          cap_fraction=float(sec.get("cap_fraction", 0.1)))
    return pc, sec["snapshot_stride"], applied_default_dt


class _ArtifactWriter:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out_dir, name)

    def register_dir_files(self, names):
        self.files.extend(names)

    def checksums(self):
        out = {}
        for name in sorted(set(self.files)):
            with open(os.path.join(self.out_dir, name), "rb") as fh:
                out[name] = hashlib.sha256(fh.read()).hexdigest()
        return out


def _write_manifest(writer, cfg, extents, seed, wall_clock, notes):
    import scipy
    manifest = {
        "qfd_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "mode": cfg.mode,
        "seed": seed,
        "config_text": cfg.text,
        "extents": extents,
        "notes": notes,
        "wall_clock_s": wall_clock,
        "files": writer.checksums(),
    }
    with open(os.path.join(writer.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _trajectory_products(cfg, grid, times, psis, writer, mass, basename="trajectories"):
    tsec = build_trajectory_numbers(cfg)
    vp = SnapshotVelocityField.from_wavefunctions(times, psis, mass=mass)
    rho0 = psis[0].density()
    snap_dt = float(times[1] - times[0]) if len(times) > 1 else None
    traj_dt = float(tsec.get("dt", snap_dt))
    ts = sample_trajectory_set(rho0, tsec["n"], cfg.seed, float(times[0]),
                               tsec["sampling"])
    ts = integrate_trajectories(ts, vp, float(times[0]), float(times[-1]),
                                traj_dt, tsec["store_stride"])
    save_trajectories_csv(ts, writer.path(f"{basename}.csv"),
                          writer.path(f"{basename}_manifest.csv"))
    return ts


def run_single(cfg):
    writer = _ArtifactWriter(cfg.output_dir)
    grid = build_grid(cfg)
    potential = build_potential(cfg, "potential")
    psi0 = _build_initial_field(grid, build_initial_spec(cfg, "initial"), potential)
    pc, stride, used_default_dt = _propagator_config(cfg, grid)

    rec = SnapshotRecorder()
    log = RunLogWriter(writer.path("run_log.csv"), potential, pc)
    propagate(psi0, potential, pc, observers=[rec, log], observer_stride=stride)

    hydro = []
    for k, (t, psi) in enumerate(zip(rec.times, rec.snapshots)):
        fieldio.save_field(psi, writer.path(f"psi_{k:04d}.qfdf"))
        hf = decompose(psi, potential, t, mass=pc.mass)
        hydro.append(hf)
        save_bundle(hf, writer.out_dir, prefix=f"hydro_{k:04d}")
        writer.register_dir_files([f"hydro_{k:04d}_{name}.qfdf" for name in
                                   ["rho", "velocity_0", "current_0", "q_potential", "v_eff"]])
        writer.register_dir_files([f"hydro_{k:04d}_manifest.csv"])

    with open(writer.path("residuals.csv"), "w", newline="") as fh:
        fh.write("t,max_abs,l2\n")
        for k in range(1, len(hydro) - 1):
            dt_s = rec.times[k + 1] - rec.times[k]
            _, rep = continuity_residual(hydro[k - 1], hydro[k], hydro[k + 1], dt_s)
            fh.write(f"{float(rec.times[k])!r},{rep.max_abs!r},{rep.l2!r}\n")

    n_traj = None
    if cfg.section("trajectories") is not None:
        ts = _trajectory_products(cfg, grid, rec.times, rec.snapshots, writer, pc.mass)
        n_traj = ts.n_traj

    extents = {
        "x_min": grid.x_min, "x_max": grid.x_min + (grid.n_points - 1) * grid.dx,
        "n": grid.n_points, "snapshot_times": [float(t) for t in rec.times],
        "n_traj": n_traj,
    }
    return writer, extents, {"applied_default_dt": used_default_dt, "dt": pc.dt}


def _build_twobody(cfg):
    grid2d = build_grid2d(cfg)
    v1 = build_potential(cfg, "potential")
    v2 = build_potential(cfg, "potential2")
    spec1 = build_initial_spec(cfg, "initial")
    spec2 = build_initial_spec(cfg, "initial2")
    phi1 = _build_initial_field(grid2d.gx, spec1, v1)
    phi2 = _build_initial_field(grid2d.gy, spec2, v2)
    inter = build_interaction(cfg)
    sym = cfg.section("twobody", {}).get("symmetrize", "none")
    psi = product_state(grid2d, phi1, phi2)
    if sym != "none":
        psi = symmetrize(psi, sym)
    state = TwoBodyState(psi, inter, (v1, v2), symmetry=sym)
    hartree = HartreeState(phi1, phi2, inter, (v1, v2))
    return grid2d, state, hartree


def run_twobody_full(cfg):
    writer = _ArtifactWriter(cfg.output_dir)
    grid2d, state, hartree = _build_twobody(cfg)
    pc, stride, used_default_dt = _propagator_config(cfg, grid2d)
    run = propagate_full(state, pc, snapshot_stride=stride)
    pcdict = cfg.section("twobody", {})
    run_h = propagate_hartree(hartree, pc, snapshot_stride=stride,
                              predictor_corrector=bool(pcdict.get("predictor_corrector", False)))

    with open(writer.path("run_log.csv"), "w", newline="") as fh:
        fh.write("t,norm\n")
        for t, psi in zip(run.times, run.psis):
            fh.write(f"{float(t)!r},{psi.norm_sq()!r}\n")
    for k, psi in enumerate(run.psis):
        fieldio.save_field(psi, writer.path(f"psi2d_{k:04d}.qfdf"))
    compare_runs_csv(run, run_h, writer.path("comparison.csv"))

    n_traj = None
    if cfg.section("trajectories") is not None:
        tsec = build_trajectory_numbers(cfg)
        snap_dt = float(run.times[1] - run.times[0])
        traj_dt = float(tsec.get("dt", snap_dt))
        ts_f1, ts_f2 = per_particle_trajectories(
            run, n=tsec["n"], seed=cfg.seed, traj_dt=traj_dt,
            store_stride=tsec["store_stride"])
        starts = np.column_stack([ts_f1.positions[0][:, 0], ts_f2.positions[0][:, 0]])
        ts_h1, ts_h2 = per_particle_trajectories(
            run_h, initial_positions=starts, traj_dt=traj_dt,
            store_stride=tsec["store_stride"])
        save_trajectories_csv(ts_f1, writer.path("traj_full_p1.csv"),
                              writer.path("traj_full_p1_manifest.csv"))
        save_trajectories_csv(ts_f2, writer.path("traj_full_p2.csv"),
                              writer.path("traj_full_p2_manifest.csv"))
        save_trajectories_csv(ts_h1, writer.path("traj_hartree_p1.csv"),
                              writer.path("traj_hartree_p1_manifest.csv"))
        save_trajectories_csv(ts_h2, writer.path("traj_hartree_p2.csv"),
                              writer.path("traj_hartree_p2_manifest.csv"))
        with open(writer.path("trajectory_comparison.csv"), "w", newline="") as fh:
            fh.write("t,max_dev_p1,max_dev_p2\n")
            for k, t in enumerate(ts_f1.times):
                d1 = float(np.max(np.abs(ts_f1.positions[k] - ts_h1.positions[k])))
                d2 = float(np.max(np.abs(ts_f2.positions[k] - ts_h2.positions[k])))
                fh.write(f"{float(t)!r},{d1!r},{d2!r}\n")
        n_traj = ts_f1.n_traj

    extents = {
        "x_min": grid2d.gx.x_min,
        "x_max": grid2d.gx.x_min + (grid2d.gx.n_points - 1) * grid2d.gx.dx,
        "n": list(grid2d.shape), "snapshot_times": [float(t) for t in run.times],
        "n_traj": n_traj,
    }
    return writer, extents, {"applied_default_dt": used_default_dt, "dt": pc.dt}


def run_twobody_hartree(cfg):
    writer = _ArtifactWriter(cfg.output_dir)
    grid2d, _, hartree = _build_twobody(cfg)
    pc, stride, used_default_dt = _propagator_config(cfg, grid2d.gx)
    pcdict = cfg.section("twobody", {})
    run = propagate_hartree(hartree, pc, snapshot_stride=stride,
                            predictor_corrector=bool(pcdict.get("predictor_corrector", False)))
    with open(writer.path("run_log.csv"), "w", newline="") as fh:
        fh.write("t,norm1,norm2\n")
        for t, o1, o2 in zip(run.times, run.orbitals1, run.orbitals2):
            fh.write(f"{float(t)!r},{o1.norm_sq()!r},{o2.norm_sq()!r}\n")
    for k, (o1, o2) in enumerate(zip(run.orbitals1, run.orbitals2)):
        fieldio.save_field(o1, writer.path(f"orb1_{k:04d}.qfdf"))
        fieldio.save_field(o2, writer.path(f"orb2_{k:04d}.qfdf"))

    n_traj = None
    if cfg.section("trajectories") is not None:
        tsec = build_trajectory_numbers(cfg)
        snap_dt = float(run.times[1] - run.times[0])
        traj_dt = float(tsec.get("dt", snap_dt))
        ts1, ts2 = per_particle_trajectories(run, n=tsec["n"], seed=cfg.seed,
                                             traj_dt=traj_dt,
                                             store_stride=tsec["store_stride"])
        save_trajectories_csv(ts1, writer.path("traj_p1.csv"),
                              writer.path("traj_p1_manifest.csv"))
        save_trajectories_csv(ts2, writer.path("traj_p2.csv"),
                              writer.path("traj_p2_manifest.csv"))
        n_traj = ts1.n_traj
    extents = {
        "x_min": grid2d.gx.x_min,
        "x_max": grid2d.gx.x_min + (grid2d.gx.n_points - 1) * grid2d.gx.dx,
        "n": grid2d.gx.n_points, "snapshot_times": [float(t) for t in run.times],
        "n_traj": n_traj,
    }
    return writer, extents, {"applied_default_dt": used_default_dt, "dt": pc.dt}


def run_reduced(cfg):
    writer = _ArtifactWriter(cfg.output_dir)
    grid2d, state, _ = _build_twobody(cfg)
    pc, stride, used_default_dt = _propagator_config(cfg, grid2d)
    run = propagate_full(state, pc, snapshot_stride=stride)
    rdms = [reduce_to_particle(psi, keep=0, t=float(t))
            for t, psi in zip(run.times, run.psis)]
    for k, rdm in enumerate(rdms):
        rdm.save(writer.path(f"rdm_{k:04d}.qfdf"))
    with open(writer.path("purity.csv"), "w", newline="") as fh:
        fh.write("t,purity,hermiticity_defect,trace,min_eigenvalue\n")
        for rdm in rdms:
            p = purity(rdm)
            fh.write(f"{rdm.t!r},{p.purity!r},{rdm.hermiticity_defect()!r},"
                     f"{rdm.trace()!r},{rdm.min_eigenvalue()!r}\n")
    from .reduced import continuity_residual_rdm
    with open(writer.path("reduced_continuity.csv"), "w", newline="") as fh:
        fh.write("t,max_abs\n")
        for k in range(1, len(rdms) - 1):
            dt_s = rdms[k + 1].t - rdms[k].t
            _, mx = continuity_residual_rdm(rdms[k - 1], rdms[k], rdms[k + 1],
                                            dt_s, mass=pc.mass)
            fh.write(f"{rdms[k].t!r},{mx!r}\n")

    n_traj = None
    if cfg.section("trajectories") is not None:
        tsec = build_trajectory_numbers(cfg)
        snap_dt = float(run.times[1] - run.times[0])
        traj_dt = float(tsec.get("dt", snap_dt))
        ts = reduced_trajectories(rdms, n=tsec["n"], seed=cfg.seed,
                                  traj_dt=traj_dt, store_stride=tsec["store_stride"],
                                  mass=pc.mass)
        save_trajectories_csv(ts, writer.path("reduced_trajectories.csv"),
                              writer.path("reduced_trajectories_manifest.csv"))
        n_traj = ts.n_traj
    extents = {
        "x_min": grid2d.gx.x_min,
        "x_max": grid2d.gx.x_min + (grid2d.gx.n_points - 1) * grid2d.gx.dx,
        "n": grid2d.gx.n_points, "snapshot_times": [float(t) for t in run.times],
        "n_traj": n_traj,
    }
    return writer, extents, {"applied_default_dt": used_default_dt, "dt": pc.dt}


def run_qfdft(cfg):
    writer = _ArtifactWriter(cfg.output_dir)
    grid = build_grid(cfg)
    potential = build_potential(cfg, "potential")
    fsec = build_functional_numbers(cfg)
    from .manybody import SoftCoulomb
    hartree = SoftCoulomb(float(fsec.get("kernel_lambda", 1.0)),
                          float(fsec.get("kernel_a", 1.0))) \
        if fsec.get("hartree", False) else None
    fc = FunctionalConfig(external=potential, hartree=hartree, xc=fsec["xc"])
    pc, stride, used_default_dt = _propagator_config(cfg, grid)

    n_orb = fsec["n_orbitals"]
    if potential.kind != "harmonic":
        raise ConfigValidationError("qfdft starting orbitals require potential.kind harmonic")
    guess = OrbitalSet([harmonic_eigenstate(grid, k, omega=potential.params["omega"],
                                            center=potential.params["center"])
                        for k in range(n_orb)], mass=pc.mass)
    scf = stationary_limit(guess, fc, mixing=fsec["mixing"])
    run = propagate_ks(scf.orbitals, fc, pc, snapshot_stride=stride)

    for k, snap in enumerate(run.orbital_snapshots):
        for j, orb in enumerate(snap):
            fieldio.save_field(orb, writer.path(f"orb{j}_{k:04d}.qfdf"))
    write_density_current_csv(run, writer.path("density_current.csv"), mass=pc.mass)
    write_diagnostics_csv(run, fc, writer.path("diagnostics.csv"), mass=pc.mass)
    with open(writer.path("scf.csv"), "w", newline="") as fh:
        fh.write("iteration,residual\n")
        for i, r in enumerate(scf.history):
            fh.write(f"{i},{r!r}\n")
    extents = {
        "x_min": grid.x_min, "x_max": grid.x_min + (grid.n_points - 1) * grid.dx,
        "n": grid.n_points, "snapshot_times": [float(t) for t in run.times],
        "n_traj": None, "eigenvalues": [float(w) for w in scf.eigenvalues],
    }
    return writer, extents, {"applied_default_dt": used_default_dt, "dt": pc.dt,
                             "scf_iterations": len(scf.history)}


_PIPELINES = {
    "single": run_single,
    "twobody_full": run_twobody_full,
    "twobody_hartree": run_twobody_hartree,
    "reduced": run_reduced,
    "qfdft": run_qfdft,
}


def run_scenario(cfg):
    """Execute the configured pipeline; returns the manifest dict."""
    if cfg.mode == "check":
        from .checks import run_suite_to_dir
        return run_suite_to_dir(cfg.suite, cfg.output_dir)
    start = time.time()
    writer, extents, notes = _PIPELINES[cfg.mode](cfg)
    return _write_manifest(writer, cfg, extents, cfg.seed, time.time() - start, notes)
