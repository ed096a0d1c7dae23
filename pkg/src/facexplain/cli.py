"""Command-line orchestration of the full pipeline.

Subcommands: ``extract-concepts``, ``explain-pair``, ``evaluate``,
``report``, ``validate-config`` plus ``replay`` for reproducing a previous
run from its ``run.json``.  Exit codes: 0 success, 2 validation error, 3
runtime error.  Every command writes a ``run.json`` with the fully resolved
configuration; replaying it in offline mode reproduces all artifacts
bit-identically regardless of ``--jobs``.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .aggregation import GlobalConceptRanking, borda_aggregate
from .concepts import (
    eaoc_attribution,
    group_output_space,
    mage_concept_groups,
    output_space,
)
from .config import RunConfig, read_run_record, write_run_record
from .data import (
    ManifestEntry,
    PairEntry,
    load_manifest,
    load_pairs,
    write_image_png,
    write_manifest,
    write_pairs,
)
from .embedder import CachingEmbedder, Embedder
from .errors import ConfigValidationError, FacexplainError, ValidationError
from .evaluation import (
    dominance_report,
    plot_curves,
    random_baseline,
    representation_curve,
    similarity_curve,
)
from .explanation import contribution_table, render_map, save_map_png, single_removal_s0
from .llm_report import (
    DEFAULT_TEMPLATE,
    EndpointConfig,
    FixtureStore,
    LlmError,
    build_report,
    generate_text,
    render_prompt,
)
from .semantics import RegionMaskStack, build_masks, load_semantic_set
from .surrogates import kernelshap_attribution, lime_attribution
from .synthetic import (
    SyntheticRegionEmbedder,
    descending_weights,
    grid_landmarks,
    make_grid_set,
    paint_regions,
    region_intensities,
)


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _write_run_records(directory: Path, *, command: str, config: RunConfig, params: dict,
                       created: str) -> None:
    """run.json holds the latest command's record; a per-command copy
    (run_<command>.json) survives later commands sharing the directory."""
    for name in ("run.json", f"run_{command}.json"):
        write_run_record(directory / name, command=command, config=config,
                         params=params, created=created, version=__version__)


def _write_pair_index(outdir: Path) -> None:
    """One-page index over every explained pair in the output directory."""
    rows = []
    for report_path in sorted(outdir.glob("*/report.json")):
        report = json.loads(report_path.read_text())
        pair_dir = report_path.parent.name
        maps = " ".join(f'<a href="{pair_dir}/{m}">{m.rsplit("_", 1)[-1]}</a>'
                        for m in report.get("map_files", []))
        rows.append(
            f"<tr><td><a href='{pair_dir}/report.md'>{report['pair_id']}</a></td>"
            f"<td>{report['percentage']}</td><td>{report['s_ab']:.6f}</td><td>{maps}</td></tr>"
        )
    if not rows:
        return
    (outdir / "index.html").write_text(
        "<!doctype html><title>pair explanations</title>"
        "<table border='1' cellpadding='4'>"
        "<tr><th>pair</th><th>score</th><th>raw</th><th>maps</th></tr>"
        + "".join(rows) + "</table>\n"
    )


def _parallel_map(fn, items, jobs: int):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------------------
# Dataset assembly


@dataclass
class LoadedDataset:
    ids: list[str]
    images: list[np.ndarray]
    masks: list[RegionMaskStack]
    pairs: list[PairEntry]
    sset: "object"

    def index(self, image_id: str) -> int:
        try:
            return self.ids.index(image_id)
        except ValueError:
            raise ValidationError(f"image id '{image_id}' is not in the dataset manifest") from None


def _generate_dataset(cfg: RunConfig) -> LoadedDataset:
    """Materialize the synthetic desk-scale dataset under the output dir."""
    from .semantics import write_landmarks
    from .synthetic import uniform_intensities

    gen = cfg.raw["data"]["generate"]
    rows, cols = gen["grid_rows"], gen["grid_cols"]
    width, height = gen["width"], gen["height"]
    intensities = uniform_intensities if gen.get("intensities") == "uniform" else region_intensities
    sset = make_grid_set(rows, cols)
    root = cfg.output_dir / "dataset"
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    ids, images, masks = [], [], []
    s = sset.size
    for i in range(gen["count"]):
        image_id = f"synth{i:03d}"
        landmarks = grid_landmarks(rows, cols, width, height, image_id)
        stack = build_masks(landmarks, sset)
        image = paint_regions(stack, intensities(s, i, seed=gen["seed"]))
        image_path = root / f"{image_id}.png"
        landmark_path = root / f"{image_id}.landmarks.json"
        write_image_png(image_path, image)
        write_landmarks(landmarks, landmark_path)
        entries.append(ManifestEntry(image_id=image_id, image_path=image_path, landmark_path=landmark_path))
        ids.append(image_id)
        images.append(image)
        masks.append(stack)
    write_manifest(entries, root / "images.json")
    rng = np.random.default_rng(gen["seed"] + 1)
    pairs = []
    for p in range(gen["pairs"]):
        a, b = rng.choice(gen["count"], size=2, replace=False)
        pairs.append(PairEntry(pair_id=f"pair{p:03d}", a=ids[a], b=ids[b]))
    if pairs:
        write_pairs(pairs, root / "pairs.json")
    return LoadedDataset(ids=ids, images=images, masks=masks, pairs=pairs, sset=sset)


def _load_dataset(cfg: RunConfig, *, calibration: bool = False) -> LoadedDataset:
    """Load the run's dataset; ``calibration=True`` prefers the held-out
    concept-extraction split when one is configured."""
    if cfg.raw["data"].get("generate"):
        return _generate_dataset(cfg)
    sset = load_semantic_set(_resolve_set(cfg))
    manifest_key = "manifest"
    if calibration and cfg.raw["data"].get("calibration_manifest"):
        manifest_key = "calibration_manifest"
    entries = load_manifest(cfg.resolve(cfg.raw["data"][manifest_key]))
    ids, images, masks = [], [], []
    for entry in entries:
        ids.append(entry.image_id)
        images.append(entry.load_image())
        masks.append(build_masks(entry.load_landmarks(), sset))
    pairs = []
    if cfg.raw["data"].get("pairs"):
        pairs = load_pairs(cfg.resolve(cfg.raw["data"]["pairs"]))
    return LoadedDataset(ids=ids, images=images, masks=masks, pairs=pairs, sset=sset)


def _resolve_set(cfg: RunConfig):
    sset = cfg.raw["semantics"]["set"]
    return sset if sset in ("set0", "set1", "set2") else cfg.resolve(sset)


def _build_embedder(cfg: RunConfig, dataset: LoadedDataset) -> Embedder:
    model = cfg.raw["model"]
    if model["kind"] == "synthetic":
        s = dataset.masks[0].size
        weights = model.get("weights") or descending_weights(s).tolist()
        if len(weights) != s:
            raise ValidationError(f"model.weights lists {len(weights)} values for {s} regions")
        inner = SyntheticRegionEmbedder(
            dataset.masks[0],
            weights,
            dim=max(int(model["dim"]), s),
            seed=int(model["seed"]),
            offset_scale=float(model["offset_scale"]),
        )
    else:
        from .embedder import OnnxEmbedder

        inner = OnnxEmbedder(
            cfg.resolve(model["path"]),
            input_name=model["input_name"],
            output_name=model["output_name"],
            activation_name=model.get("activation_name"),
            mean=model.get("mean", 0.0),
            scale=model.get("scale", 1.0),
            layout=model.get("layout", "nchw"),
        )
    return CachingEmbedder(inner)


# ---------------------------------------------------------------------------
# Commands


def cmd_extract_concepts(cfg: RunConfig, *, jobs: int = 1, created: str | None = None) -> dict:
    cfg.validate()
    created = created or _utcnow()
    dataset = _load_dataset(cfg, calibration=True)
    embedder = _build_embedder(cfg, dataset)
    fill = cfg.fill
    outdir = cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    for method in cfg.raw["methods"]["names"]:
        mcfg = cfg.raw["methods"][method]
        if method == "eaoc":
            groups = None
            group_signals = None
            distances = output_space(embedder, dataset.images, dataset.ids)
            if int(mcfg.get("groups", 0)) > 0:
                groups = mage_concept_groups(embedder, dataset.images, int(mcfg["groups"]),
                                             seed=int(mcfg["seed"]))
                group_signals = group_output_space(embedder, dataset.images, groups)

            def attribution(j, _m=mcfg, _g=groups, _gs=group_signals, _d=distances):
                return eaoc_attribution(
                    embedder, dataset.images, j, dataset.masks[j], fill,
                    distances=_d, groups=_g, group_signals=_gs, image_id=dataset.ids[j],
                )

        elif method == "lime":

            def attribution(j, _m=mcfg):
                return lime_attribution(
                    embedder, dataset.images[j], dataset.masks[j], fill,
                    samples=int(_m["samples"]), kernel_width=float(_m["kernel_width"]),
                    ridge=float(_m["ridge"]), seed=int(_m["seed"]) + j,
                    norm=int(_m["norm"]), image_id=dataset.ids[j],
                )

        else:  # kernelshap

            def attribution(j, _m=mcfg):
                return kernelshap_attribution(
                    embedder, dataset.images[j], dataset.masks[j], fill,
                    mode=_m["mode"], samples=int(_m["samples"]), seed=int(_m["seed"]) + j,
                    value_fn="single", image_id=dataset.ids[j],
                )

        attributions = _parallel_map(attribution, range(len(dataset.images)), jobs)
        ranking = borda_aggregate(
            [a.ranking() for a in attributions],
            set_id=dataset.sset.set_id,
            method=method,
            region_names=dataset.sset.region_names,
            provenance={"images": len(attributions), "config": mcfg, "fill": fill.label,
                        "model_id": embedder.model_id},
        )
        ranking.save(outdir / f"ranking_{method}.json")
        (outdir / f"ranking_{method}.md").write_text(ranking.to_markdown())
        written.append(f"ranking_{method}.json")

    if len(cfg.raw["methods"]["names"]) > 1:
        (outdir / "ranking_comparison.md").write_text(_comparison_table(cfg, outdir))
        written.append("ranking_comparison.md")
    _write_run_records(outdir, command="extract-concepts", config=cfg, params={}, created=created)
    return {"written": written, "outdir": str(outdir)}


def _comparison_table(cfg: RunConfig, outdir: Path) -> str:
    rankings = {}
    for method in cfg.raw["methods"]["names"]:
        rankings[method] = GlobalConceptRanking.load(outdir / f"ranking_{method}.json")
    methods = list(rankings)
    first = rankings[methods[0]]
    lines = ["| region | " + " | ".join(f"{m} rank" for m in methods) + " |",
             "|---|" + "---:|" * len(methods)]
    for n in range(first.size):
        name = first.region_names[n] if first.region_names else f"region {n}"
        cells = " | ".join(str(int(rankings[m].order[n])) for m in methods)
        lines.append(f"| {name} | {cells} |")
    return "\n".join(lines) + "\n"


def cmd_explain_pair(
    cfg: RunConfig,
    image_a: str,
    image_b: str,
    *,
    ranking: str | None = None,
    top_k: int | None = None,
    offline: bool = False,
    record_fixtures: bool = False,
    created: str | None = None,
    notices: list | None = None,
) -> dict:
    cfg.validate()
    created = created or _utcnow()
    notices = notices if notices is not None else []
    dataset = _load_dataset(cfg)
    embedder = _build_embedder(cfg, dataset)
    fill = cfg.fill
    top_k = top_k or int(cfg.raw["explain"]["top_k"])

    ranking_src = ranking if ranking is not None else (cfg.raw["explain"]["ranking"] or "")
    if ranking_src == "uniform":
        global_ranking = None
    elif ranking_src:
        global_ranking = GlobalConceptRanking.load(cfg.resolve(str(ranking_src)))
    else:
        raise ValidationError(
            "no concept ranking given: run extract-concepts and set explain.ranking, "
            "or pass --ranking uniform for the unweighted ablation"
        )

    ia, ib = dataset.index(image_a), dataset.index(image_b)
    expl = single_removal_s0(
        embedder, dataset.images[ia], dataset.images[ib],
        dataset.masks[ia], dataset.masks[ib], global_ranking, fill,
        region_names=tuple(dataset.sset.region_names),
    )
    pair_dir = cfg.output_dir / expl.pair_id
    pair_dir.mkdir(parents=True, exist_ok=True)
    prefix = expl.pair_id

    map_a, map_b = render_map(expl, k=min(top_k, expl.size))
    save_map_png(map_a, pair_dir / f"{prefix}_mapA.png")
    save_map_png(map_b, pair_dir / f"{prefix}_mapB.png")
    table = contribution_table(expl, k=min(top_k, expl.size))
    (pair_dir / f"{prefix}_table.json").write_text(table.to_json())
    (pair_dir / f"{prefix}_table.csv").write_text(table.to_csv())
    (pair_dir / f"{prefix}_table.md").write_text(table.to_markdown())
    expl.save(pair_dir / f"{prefix}_explanation.json")

    prompt = render_prompt(DEFAULT_TEMPLATE, expl, k=min(top_k, expl.size))
    llm_text, llm_model = _maybe_generate(cfg, prompt, offline=offline,
                                          record=record_fixtures, notices=notices)
    report = build_report(
        expl, prompt=prompt, generated_at=created,
        map_files=(f"{prefix}_mapA.png", f"{prefix}_mapB.png"),
        llm_text=llm_text, llm_model=llm_model, k=min(top_k, expl.size),
    )
    (pair_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    (pair_dir / "report.md").write_text(report.to_markdown())
    _write_run_records(pair_dir, command="explain-pair", config=cfg,
                       params={"image_a": image_a, "image_b": image_b, "ranking": ranking_src,
                               "top_k": top_k, "offline": offline}, created=created)
    _write_pair_index(cfg.output_dir)
    return {"pair_dir": str(pair_dir), "s_ab": expl.s_ab, "notices": notices}


def _maybe_generate(cfg: RunConfig, prompt: str, *, offline: bool, record: bool,
                    notices: list) -> tuple[str | None, str | None]:
    llm = cfg.raw["llm"]
    if not llm["model"]:
        notices.append("llm.model not configured; report written without an LLM section")
        return None, None
    endpoint = EndpointConfig(
        base_url=llm["base_url"], model=llm["model"], api_key_env=llm["api_key_env"],
        temperature=float(llm["temperature"]), timeout=float(llm["timeout"]),
        retries=int(llm["retries"]),
    )
    fixtures = FixtureStore(cfg.resolve(llm["fixtures"]))
    if offline:
        try:
            return generate_text(prompt, endpoint, offline=True, fixtures=fixtures), llm["model"]
        except LlmError as exc:
            notices.append(f"offline and no fixture recorded; skipping LLM section ({exc})")
            return None, None
    if not llm["base_url"]:
        notices.append("llm.base_url not configured; report written without an LLM section")
        return None, None
    return generate_text(prompt, endpoint, fixtures=fixtures, record=record), llm["model"]


def cmd_evaluate(
    cfg: RunConfig,
    *,
    target: str | None = None,
    trials: int | None = None,
    seed: int | None = None,
    rankings: list[str] | None = None,
    jobs: int = 1,
    created: str | None = None,
) -> dict:
    cfg.validate()
    created = created or _utcnow()
    dataset = _load_dataset(cfg)
    embedder = _build_embedder(cfg, dataset)
    fill = cfg.fill
    ev = cfg.raw["evaluation"]
    target = target or ev["target"]
    trials = trials if trials is not None else int(ev["trials"])
    seed = seed if seed is not None else int(ev["seed"])
    outdir = cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)

    ranking_files = [cfg.resolve(p) for p in (rankings if rankings is not None else ev["rankings"])]
    if not ranking_files:
        ranking_files = sorted(outdir.glob("ranking_*.json"))
    if not ranking_files:
        raise ValidationError("no ranking files found; run extract-concepts first or pass --rankings")

    if target == "similarity":
        if not dataset.pairs:
            raise ValidationError("evaluation target 'similarity' needs a pair manifest (data.pairs)")
        pair_data = [
            (dataset.images[dataset.index(p.a)], dataset.images[dataset.index(p.b)],
             dataset.masks[dataset.index(p.a)], dataset.masks[dataset.index(p.b)])
            for p in dataset.pairs
        ]

    curves = {}
    for path in ranking_files:
        ranking = GlobalConceptRanking.load(path)
        if target == "representation":
            curve = representation_curve(embedder, dataset.images, ranking, dataset.masks, fill,
                                         method=ranking.method, set_id=ranking.set_id)
        else:
            curve = similarity_curve(embedder, pair_data, ranking, fill,
                                     method=ranking.method, set_id=ranking.set_id)
        curves[ranking.method] = curve
        curve.save(outdir / f"curve_{target}_{ranking.method}.json")

    if target == "representation":
        baseline = random_baseline(embedder, dataset.images, fill, target=target, trials=trials,
                                   seed=seed, masks=dataset.masks, jobs=jobs)
    else:
        baseline = random_baseline(embedder, pair_data, fill, target=target, trials=trials,
                                   seed=seed, jobs=jobs)
    baseline_record = {
        "target": target, "trials": trials, "seed": seed,
        "mean": [float(v) for v in baseline.mean],
    }
    (outdir / f"curve_{target}_random.json").write_text(
        json.dumps(baseline_record, indent=2, sort_keys=True) + "\n")

    report = dominance_report(curves, baseline)
    report.save(outdir / f"dominance_{target}.json")
    (outdir / f"dominance_{target}.md").write_text(report.to_markdown())
    for suffix in ("svg", "png"):
        plot_curves(curves, baseline, outdir / f"curves_{target}.{suffix}",
                    title=f"{target} displacement, set {dataset.sset.set_id}")
    _write_run_records(outdir, command="evaluate", config=cfg,
                       params={"target": target, "trials": trials, "seed": seed,
                               "rankings": [str(p) for p in ranking_files]}, created=created)
    return {"outdir": str(outdir), "dominance": report.to_dict()}


def cmd_report(
    cfg: RunConfig,
    explanation_path: str,
    *,
    top_k: int | None = None,
    offline: bool = False,
    record_fixtures: bool = False,
    created: str | None = None,
    notices: list | None = None,
) -> dict:
    cfg.validate()
    created = created or _utcnow()
    notices = notices if notices is not None else []
    from .explanation import SimilarityExplanation

    path = cfg.resolve(explanation_path)
    expl = SimilarityExplanation.load(path)
    top_k = top_k or int(cfg.raw["explain"]["top_k"])
    prompt = render_prompt(DEFAULT_TEMPLATE, expl, k=min(top_k, expl.size))
    llm_text, llm_model = _maybe_generate(cfg, prompt, offline=offline,
                                          record=record_fixtures, notices=notices)
    maps = tuple(
        name for name in (f"{expl.pair_id}_mapA.png", f"{expl.pair_id}_mapB.png")
        if (path.parent / name).exists()
    )
    report = build_report(expl, prompt=prompt, generated_at=created, map_files=maps,
                          llm_text=llm_text, llm_model=llm_model, k=min(top_k, expl.size))
    (path.parent / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    (path.parent / "report.md").write_text(report.to_markdown())
    _write_run_records(path.parent, command="report", config=cfg,
                       params={"explanation": str(explanation_path), "top_k": top_k,
                               "offline": offline}, created=created)
    _write_pair_index(cfg.output_dir)
    return {"report": str(path.parent / "report.md"), "notices": notices}


def cmd_validate_config(cfg: RunConfig) -> dict:
    issues = cfg.problems()
    if issues:
        raise ConfigValidationError(issues)
    return {"ok": True, "output_dir": str(cfg.output_dir)}


def cmd_replay(run_json: str, *, jobs: int = 1) -> dict:
    record = read_run_record(run_json)
    cfg = RunConfig.from_run_record(record)
    command = record["command"]
    params = record.get("params", {})
    created = record["created"]
    if command == "extract-concepts":
        return cmd_extract_concepts(cfg, jobs=jobs, created=created)
    if command == "explain-pair":
        return cmd_explain_pair(
            cfg, params["image_a"], params["image_b"], ranking=params.get("ranking") or None,
            top_k=params.get("top_k"), offline=True, created=created,
        )
    if command == "evaluate":
        return cmd_evaluate(
            cfg, target=params.get("target"), trials=params.get("trials"),
            seed=params.get("seed"), rankings=params.get("rankings"), jobs=jobs, created=created,
        )
    if command == "report":
        return cmd_report(cfg, params["explanation"], top_k=params.get("top_k"),
                          offline=True, created=created)
    raise ValidationError(f"run.json records unknown command '{command}'")


# ---------------------------------------------------------------------------
# Argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facexplain",
        description="Semantic occlusion explanations for face verification embeddings",
    )
    parser.add_argument("--version", action="version", version=f"facexplain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--jobs", type=int, default=1, help="worker threads (results are jobs-independent)")

    p = sub.add_parser("extract-concepts", help="rank globally important regions and aggregate them")
    common(p)

    p = sub.add_parser("explain-pair", help="single-removal explanation for one verification pair")
    common(p)
    p.add_argument("--image-a", required=True, help="image id from the dataset manifest")
    p.add_argument("--image-b", required=True, help="image id from the dataset manifest")
    p.add_argument("--ranking", default=None, help="ranking JSON path, or 'uniform' for g_n = 1")
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--offline", action="store_true", help="never open a network connection")
    p.add_argument("--record-fixtures", action="store_true")
    p.add_argument("--llm-base-url", default=None)
    p.add_argument("--llm-model", default=None)

    p = sub.add_parser("evaluate", help="faithfulness curves against a random baseline")
    common(p)
    p.add_argument("--target", choices=["representation", "similarity"], default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rankings", nargs="*", default=None)

    p = sub.add_parser("report", help="re-render the report bundle from an explanation JSON")
    common(p)
    p.add_argument("--explanation", required=True)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--offline", action="store_true")
    p.add_argument("--record-fixtures", action="store_true")
    p.add_argument("--llm-base-url", default=None)
    p.add_argument("--llm-model", default=None)

    p = sub.add_parser("validate-config", help="check a configuration and report every problem")
    common(p, config=True)

    p = sub.add_parser("replay", help="reproduce a previous run from its run.json (offline)")
    p.add_argument("run_json")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _apply_llm_overrides(cfg: RunConfig, args) -> None:
    if getattr(args, "llm_base_url", None):
        cfg.raw["llm"]["base_url"] = args.llm_base_url
    if getattr(args, "llm_model", None):
        cfg.raw["llm"]["model"] = args.llm_model


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            result = cmd_replay(args.run_json, jobs=args.jobs)
        else:
            cfg = RunConfig.from_toml(args.config)
            if args.command == "extract-concepts":
                result = cmd_extract_concepts(cfg, jobs=args.jobs)
            elif args.command == "explain-pair":
                _apply_llm_overrides(cfg, args)
                notices: list = []
                result = cmd_explain_pair(
                    cfg, args.image_a, args.image_b, ranking=args.ranking, top_k=args.top_k,
                    offline=args.offline, record_fixtures=args.record_fixtures, notices=notices,
                )
                for notice in notices:
                    print(f"notice: {notice}", file=sys.stderr)
            elif args.command == "evaluate":
                result = cmd_evaluate(cfg, target=args.target, trials=args.trials, seed=args.seed,
                                      rankings=args.rankings, jobs=args.jobs)
            elif args.command == "report":
                _apply_llm_overrides(cfg, args)
                notices = []
                result = cmd_report(cfg, args.explanation, top_k=args.top_k, offline=args.offline,
                                    record_fixtures=args.record_fixtures, notices=notices)
                for notice in notices:
                    print(f"notice: {notice}", file=sys.stderr)
            else:  # validate-config
                result = cmd_validate_config(cfg)
    except ConfigValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except FacexplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - stable exit-code contract
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
