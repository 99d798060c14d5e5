"""Scenario runners: one function per config scenario, each writing its artifacts."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import export
from .config import RunConfig
from .continuous import (
    LinearGaussianChannel,
    MCParams,
    load_json_model,
    mc_empowerment,
    principal_axis_actions,
    qlg_empowerment,
)
from .core import (
    ContextPartition,
    SolverParams,
    average_state_empowerment,
    context_free_empowerment,
    contextual_empowerment,
    deterministic_empowerment,
    impoverished_empowerment,
    optimal_context_search,
    state_empowerment,
)
from .gridworld import (
    GridAction,
    GridMap,
    GridWorld,
    as_transition_model,
    box_world,
    correlation_report,
    empowerment_map,
    generate_maze,
)
from .infotheory import blahut_arimoto, load_channel_csv
from .model import TransitionModel, random_model
from .pendulum import (
    PendulumMap,
    PendulumParams,
    PendulumState,
    classify_behavior,
    find_power_inversion,
    greedy_control,
    is_monotone,
    pendulum_empowerment_map,
    upright_stats,
)

log = logging.getLogger(__name__)


class Artifacts:
    """Collects the files a run writes, relative to the output directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(p)
        return p


def parallel_map(fn, items, workers: int):
    """Ordered map, in a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _solver(block) -> SolverParams:
    return SolverParams(block["epsilon"], block["max_iter"], block["budget"])


def _range(values: np.ndarray) -> dict:
    v = values[np.isfinite(values)]
    if v.size == 0:
        return {"min": None, "max": None}
    return {"min": float(v.min()), "max": float(v.max())}


def _write_grid_map(art: Artifacts, stem: str, gmap: GridMap) -> dict:
    h, w = gmap.values.shape
    xs = [gmap.x0 + i for i in range(w)]
    ys = [gmap.y0 + j for j in range(h)]
    export.write_grid_csv(art.path(f"{stem}.csv"), gmap.values, xs, ys, ("x", "y", "empowerment_bits"))
    export.write_pgm(art.path(f"{stem}.pgm"), gmap.values)
    export.write_json(art.path(f"{stem}.json"), gmap.emap.to_dict())
    return {"horizon": gmap.horizon, "method": gmap.method, **_range(gmap.values)}


def _maze_world(p: dict, seed: int) -> GridWorld:
    if p.get("world_file"):
        world = GridWorld.load_json(p["world_file"])
    else:
        maze_seed = p["maze_seed"] if p.get("maze_seed") is not None else seed
        world = generate_maze(p["size"], maze_seed, p["openness"])
    if p.get("noise"):
        world = world.with_(noise=p["noise"])
    return world


def _map_for(world: GridWorld, p: dict, horizon: int) -> GridMap:
    return empowerment_map(world, horizon, p["method"], _solver(p["solver"]),
                           budget=p["budget"], segments=p["segments"])


# -- grid scenarios ------------------------------------------------------------


def run_maze(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    world = _maze_world(p, cfg.seed)
    world.save_json(art.path("world.json"))
    log.info("maze %s: %d-step %s map", world.name, p["horizon"], p["method"])
    gmap = _map_for(world, p, p["horizon"])
    return {"world": world.name, "map": _write_grid_map(art, "empowerment", gmap)}


def run_box(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    if p["bounded_size"]:
        n = p["bounded_size"]
        world = GridWorld(n, n, box=tuple(p["box"]), box_pushable=p["pushable"],
                          box_perceivable=p["perceivable"], noise=p["noise"], name="box-bounded")
    else:
        world = box_world(p["pushable"], p["perceivable"], p["view_radius"], tuple(p["box"]), p["noise"])
    world.save_json(art.path("world.json"))
    log.info("%s: %d-step %s map", world.name, p["horizon"], p["method"])
    gmap = _map_for(world, p, p["horizon"])
    return {"world": world.name, "map": _write_grid_map(art, "empowerment", gmap)}


def _sweep_one(args):
    world, p, n = args
    return _map_for(world, p, n)


def run_horizon_sweep(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    world = _maze_world(p, cfg.seed)
    world.save_json(art.path("world.json"))
    horizons = sorted(set(p["horizons"]))
    log.info("horizon sweep over %s on %s", horizons, world.name)
    maps = parallel_map(_sweep_one, [(world, p, n) for n in horizons], cfg.workers)
    out = {"world": world.name, "maps": {}}
    for n, gmap in zip(horizons, maps):
        out["maps"][str(n)] = _write_grid_map(art, f"empowerment_n{n}", gmap)
    stack = np.stack([m.values for m in maps])
    ok = np.isfinite(stack[0])
    out["monotone_in_horizon"] = bool(np.all(np.diff(stack[:, ok], axis=0) >= -1e-9))
    return out


def run_impoverished(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    world = _maze_world(p, cfg.seed)
    world.save_json(art.path("world.json"))
    total = p["horizon"] * p["segments"]
    gm = as_transition_model(world, total)
    start = tuple(p["start"]) if p.get("start") else min(gm.initial_states, key=lambda c: (c[1], c[0]))
    r = gm.state_of(start)
    solver = _solver(p["solver"])
    log.info("impoverished empowerment at %s: %d x %d steps, budget %d",
             start, p["segments"], p["horizon"], p["budget"])
    res = impoverished_empowerment(gm.model, r, p["horizon"], p["budget"], p["segments"], solver)
    names = [a.name for a in GridAction]
    report = {
        "start": list(start),
        "segment_n": p["horizon"],
        "segments": p["segments"],
        "budget": p["budget"],
        "impoverished_bits": res.bits,
        "stage_bits": list(res.stage_bits),
        "budget_clamped": res.clamped,
        "sequences": [[names[a] for a in seq] for seq in res.sequences],
        "endpoints": [gm.agent_cell[e].tolist() for e in res.endpoints],
    }
    if gm.model.n_actions**total <= solver.budget:
        full = (deterministic_empowerment(gm.model, r, total) if gm.model.is_deterministic
                else state_empowerment(gm.model, r, total, solver))
        report["full_bits"] = full
    else:
        report["full_bits"] = None
    export.write_json(art.path("impoverished.json"), report)
    return {k: report[k] for k in ("impoverished_bits", "full_bits")}


def _correlation_one(args):
    size, seed, openness, horizon, solver = args
    world = generate_maze(size, seed, openness)
    rep = correlation_report(world, horizon, solver)
    return seed, rep.r, rep.reason, _range(rep.empowerment.values)


def run_correlation(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    seeds = p["maze_seeds"] if p.get("maze_seeds") is not None else list(range(cfg.seed, cfg.seed + 10))
    solver = _solver(p["solver"])
    log.info("correlation over %d mazes", len(seeds))
    results = parallel_map(_correlation_one,
                           [(p["size"], s, p["openness"], p["horizon"], solver) for s in seeds], cfg.workers)
    rows = [(s, r if r is not None else float("nan"), reason, rng["min"], rng["max"])
            for s, r, reason, rng in results]
    export.write_csv(art.path("correlation.csv"),
                     ("maze_seed", "pearson_r", "status", "empowerment_min", "empowerment_max"), rows)
    negative = sum(1 for _, r, _, _ in results if r is not None and r < 0)
    summary = {"mazes": len(seeds), "negative": negative,
               "r": [r for _, r, _, _ in results]}
    export.write_json(art.path("correlation.json"), summary)
    return summary


# -- discrete channel / context ----------------------------------------------


def run_channel(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    channel = load_channel_csv(p["channel_csv"])
    res = blahut_arimoto(channel, p["epsilon"], p["max_iter"])
    report = {
        "capacity_bits": res.capacity_bits,
        "optimal_input": res.optimal_input.tolist(),
        "iterations": res.iterations,
        "converged": res.converged,
        "shape": list(channel.shape),
    }
    export.write_json(art.path("capacity.json"), report)
    return {"capacity_bits": res.capacity_bits}


def run_context(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    if p.get("model_file"):
        model = TransitionModel.load_json(p["model_file"])
    else:
        rng = np.random.default_rng(cfg.seed)
        model = random_model(rng, p["random_states"], p["random_actions"], p["random_sensors"],
                             p["random_support"])
        model.save_json(art.path("model.json"))
    solver = _solver(p["solver"])
    n = p["horizon"]
    prior = p.get("prior")
    per_state = [state_empowerment(model, r, n, solver) for r in range(model.n_states)]
    report = {
        "horizon": n,
        "state_empowerment": per_state,
        "E_R": average_state_empowerment(model, prior, n, solver),
        "E_free": context_free_empowerment(model, prior, n, solver),
    }
    if p.get("partition") is not None:
        part = ContextPartition(tuple(p["partition"]))
        report["partition"] = list(part.assignment)
        report["E_K"] = contextual_empowerment(model, part, prior, n, solver)
    if model.n_states <= 12:
        k_opt = optimal_context_search(model, prior, n, solver, p["tol"])
        report["K_opt"] = {"assignment": list(k_opt.assignment), "blocks": k_opt.blocks(),
                           "entropy_bits": k_opt.entropy(_prior_vec(model, prior))}
    else:
        report["K_opt"] = None
    export.write_json(art.path("context.json"), report)
    return {k: report[k] for k in ("E_R", "E_free")}


def _prior_vec(model: TransitionModel, prior):
    if prior is None:
        return np.full(model.n_states, 1.0 / model.n_states)
    return np.asarray(prior, dtype=float)


# -- continuous ---------------------------------------------------------------


def run_mimo(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    if p.get("channel_file"):
        channel = load_json_model(p["channel_file"])
        if not isinstance(channel, LinearGaussianChannel):
            raise ValueError(f"{p['channel_file']}: expected a linear-Gaussian channel")
    else:
        channel = LinearGaussianChannel(np.array(p["transform"]), np.array(p["noise_cov"]), p["power"])
    res = qlg_empowerment(channel)
    report = {"qlg": res.to_dict(), "channel": channel.to_dict()}
    if p.get("mc"):
        mc = p["mc"]
        model = principal_axis_actions(channel, mc["points_per_axis"])
        mres = mc_empowerment(model, MCParams(mc["n_mc"], mc["epsilon"], mc["max_iter"], cfg.seed))
        report["mc"] = {**mres.to_dict(), "n_actions": model.n_actions, "n_mc": mc["n_mc"]}
    export.write_json(art.path("mimo.json"), report)
    return {"capacity_bits": res.capacity_bits}


def _pendulum_params(block: dict, **changes) -> PendulumParams:
    return PendulumParams(**{**block, **changes})


def _write_pendulum_map(art: Artifacts, stem: str, pmap: PendulumMap) -> dict:
    # image rows are phi_dot (highest at the top), columns phi
    export.write_grid_csv(art.path(f"{stem}.csv"), pmap.values.T, pmap.phi, pmap.phi_dot,
                          ("phi", "phi_dot", "empowerment_bits"))
    export.write_pgm(art.path(f"{stem}.pgm"), pmap.values.T)
    return {"min": pmap.vmin, "max": pmap.vmax}


def run_pendulum_map(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    params = _pendulum_params(p["pendulum"])
    log.info("pendulum map %dx%d, dt=%g, P=%g", p["phi_cells"], p["phidot_cells"], params.delta_t, params.power)
    pmap = pendulum_empowerment_map(params, p["phi_cells"], p["phidot_cells"], p["phidot_range"])
    summary = _write_pendulum_map(art, "empowerment", pmap)
    export.write_json(art.path("empowerment.json"), {"params": p, **summary})
    return summary


def _trajectory_summary(traj, hold_steps: int = 50) -> dict:
    first, longest = upright_stats(traj)
    return {
        "steps": len(traj) - 1,
        "first_upright_step": first,
        "longest_upright_run": longest,
        "behavior": classify_behavior(traj, hold_steps),
        "empowerment_monotone": is_monotone(traj.empowerment),
    }


def run_pendulum_control(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    params = _pendulum_params(p["pendulum"])
    log.info("greedy control for %d steps", p["steps"])
    traj = greedy_control(params, PendulumState(p["start_phi"], p["start_phidot"]), p["steps"],
                          p["mc_rollouts"], cfg.seed)
    export.write_csv(art.path("trajectory.csv"), ("step", "phi", "phi_dot", "action", "empowerment"),
                     traj.rows())
    summary = _trajectory_summary(traj)
    export.write_json(art.path("trajectory.json"), summary)
    return summary


def _scan_one(args):
    params, cells, control_steps, rollouts, seed, hold = args
    pmap = pendulum_empowerment_map(params, *cells)
    traj = None
    if control_steps:
        traj = greedy_control(params, PendulumState(0.0, 0.0), control_steps, rollouts, seed)
    return pmap, traj


def run_pendulum_scan(cfg: RunConfig, art: Artifacts) -> dict:
    p = cfg.params
    cells = (p["phi_cells"], p["phidot_cells"], p["phidot_range"])
    pairs = [(dt, pw) for dt in p["delta_ts"] for pw in p["powers"]]
    jobs = [(_pendulum_params(p["pendulum"], delta_t=dt, power=pw), cells, p["control_steps"],
             p["mc_rollouts"], cfg.seed, p["hold_steps"]) for dt, pw in pairs]
    log.info("pendulum scan over %d (dt, P) settings", len(jobs))
    results = parallel_map(_scan_one, jobs, cfg.workers)
    index = {"settings": [], "inversions": []}
    by_dt: dict[float, list[PendulumMap]] = {}
    for (dt, pw), (pmap, traj) in zip(pairs, results):
        stem = f"maps/dt{dt:g}_P{pw:g}"
        entry = {"delta_t": dt, "power": pw, "map_csv": f"{stem}.csv", "map_pgm": f"{stem}.pgm",
                 **_write_pendulum_map(art, stem, pmap)}
        if traj is not None:
            tname = f"trajectories/dt{dt:g}_P{pw:g}.csv"
            export.write_csv(art.path(tname), ("step", "phi", "phi_dot", "action", "empowerment"), traj.rows())
            entry["trajectory_csv"] = tname
            entry.update(_trajectory_summary(traj, p["hold_steps"]))
        index["settings"].append(entry)
        by_dt.setdefault(dt, []).append(pmap)
    for dt, maps in by_dt.items():
        inv = find_power_inversion(maps)
        if inv is not None:
            index["inversions"].append({"delta_t": dt, **inv.to_dict()})
    export.write_json(art.path("index.json"), index)
    behaviors = {}
    for e in index["settings"]:
        if "behavior" in e:
            behaviors.setdefault(e["behavior"], []).append([e["delta_t"], e["power"]])
    return {"settings": len(pairs), "inversions_found": len(index["inversions"]), "behaviors": behaviors}


RUNNERS = {
    "maze": run_maze,
    "box": run_box,
    "horizon-sweep": run_horizon_sweep,
    "context": run_context,
    "impoverished": run_impoverished,
    "channel": run_channel,
    "mimo": run_mimo,
    "pendulum-map": run_pendulum_map,
    "pendulum-control": run_pendulum_control,
    "pendulum-scan": run_pendulum_scan,
    "correlation": run_correlation,
}
