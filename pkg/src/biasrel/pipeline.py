"""End-to-end reliability workflow driven by a YAML config.

Stages: load -> align -> score -> slice -> estimate -> stability -> features
-> regression, followed by report emission.  Every table is computed in
memory first; nothing is written unless all enabled stages succeed.

CSV numbers are printed with 10 significant digits.  Quantiles use linear
interpolation between order statistics (numpy's default, "type 7").
"""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import platform
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources as ilr
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .alignment import StabilityReport, embedding_stability
from .embeddings import EmbeddingEnsemble, load_ensemble
from .features import FeatureTable, build_feature_table, pearson_r, singular_plural_test
from .mixed_model import delta_r2, fit_lmm, make_dataset, standardize
from .reliability import (ALPHA, ICC21, ICC31, MatrixSet, build_interrater_matrices,
                          build_pair_ensemble_matrices, build_query_matrices,
                          build_retest_matrices, evaluate)
from .resources import (BUNDLED_LISTS, BUNDLED_QUERIES, SINGULAR_PLURAL, BasePair, WordList,
                        bundled_path, read_basepairs, read_wordlist, sha256_file)
from .scoring import (BiasTensor, MeanBiasCube, ScoringRule, aggregate_pair, aggregate_query,
                      aggregate_target, average_over_models, compute_bias_tensor)
from .synth import SynthResources, synth_ensemble

logger = logging.getLogger(__name__)

ANALYSES = ("score", "retest", "interrater", "internal", "stability", "features", "regress")
SYNTHETIC = "synthetic"
FULL = "full"

REPORT_COLUMNS = {
    "scores": ["ensemble", "rule", "pair", "target", "score"],
    "aggregates": ["ensemble", "rule", "level", "unit", "score"],
    "retest": ["ensemble", "algorithm", "corpus", "list", "unit_type", "unit", "rule", "icc21",
               "band", "n_rows", "n_cols", "degenerate"],
    "interrater": ["ensemble", "algorithm", "corpus", "list", "unit_type", "unit", "icc31", "band",
                   "n_rows", "n_cols", "degenerate"],
    "internal": ["ensemble", "algorithm", "corpus", "scope", "name", "list", "rule", "alpha",
                 "band", "n_items", "n_rows", "degenerate"],
    "correlations": ["ensemble", "list", "rule_a", "rule_b", "r", "t_stat", "p_two_sided", "n"],
    "pair_tests": ["list", "analysis", "test", "statistic", "df", "p_two_sided", "n", "defined"],
    "stability": ["ensemble", "word", "es", "pairs_used", "flagged"],
    "features": ["ensemble", "word", "log_freq", "log2_freq", "log_senses", "pos", "nn_sim",
                 "l2_norm", "es"],
    "regression": ["model", "predictor", "estimate", "se", "p_wald", "significant", "delta_r2"],
    "summary": ["analysis", "ensemble", "list", "unit_type", "rule", "n", "n_degenerate", "min",
                "q1", "median", "q3", "max", "iqr_outliers", "frac_below_0_5"],
}
# analysis toggle -> report tables it emits
ANALYSIS_REPORTS = {
    "score": ("scores", "aggregates", "correlations"),
    "retest": ("retest",),
    "interrater": ("interrater",),
    "internal": ("internal",),
    "stability": ("stability",),
    "features": ("features",),
    "regress": ("regression",),
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, resource: str, cause: BaseException):
        self.stage, self.resource = stage, resource
        super().__init__(f"[{stage}] {resource}: {cause}")


DEFAULTS: dict[str, Any] = {
    "output_dir": "biasrel_out",
    "ensembles": [],
    "rules": ["dbwa", "ripa", "nbm"],
    "nbm": {"k": 100, "exclusions": [], "exclude_pair_words": False},
    "basepairs": "bundled",
    "targets": list(BUNDLED_LISTS),
    "queries": "bundled",
    "analyses": {a: True for a in ANALYSES},
    "stability": {"pair_budget": None, "method": "jacobi"},
    "interrater": {"zscore": False},
    "pair_tests": {"aggregate": "median"},
    "n_jobs": None,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def bundled_config_path(name: str = "smoke") -> Path:
    return Path(str(ilr.files("biasrel") / "data" / f"{name}.yaml"))


def load_config(path, overrides: dict | None = None) -> dict:
    """Read a YAML config (``"smoke"`` names the bundled one) and fill defaults.

    Relative paths inside the config resolve against the config file's
    directory, except ``output_dir`` which resolves against the working
    directory.
    """
    if str(path) == "smoke":
        path = bundled_config_path()
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    if overrides:
        cfg = _merge(cfg, overrides)
    cfg["_base_dir"] = str(path.resolve().parent)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if not cfg["ensembles"]:
        raise ConfigError("config needs at least one ensemble")
    if not cfg["rules"]:
        raise ConfigError("config needs at least one scoring rule")
    for r in cfg["rules"]:
        ScoringRule(r)
    unknown = set(cfg["analyses"]) - set(ANALYSES)
    if unknown:
        raise ConfigError(f"unknown analyses {sorted(unknown)}")
    names = set()
    for i, e in enumerate(cfg["ensembles"]):
        if ("files" in e) == ("synth" in e):
            raise ConfigError(f"ensemble #{i} needs exactly one of 'files' or 'synth'")
        if "files" in e and len(e["files"]) < 2:
            raise ConfigError(f"ensemble #{i}: need at least 2 embedding files")
        name = ensemble_name(e)
        if name in names:
            raise ConfigError(f"duplicate ensemble name {name!r}")
        names.add(name)


def ensemble_name(e: dict) -> str:
    return e.get("name") or f"{e.get('algorithm', 'alg')}_{e.get('corpus', 'corpus')}"


def _resolve(cfg: dict, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(cfg["_base_dir"]) / p


# ----------------------------------------------------------------------------- resources

@dataclass
class Resources:
    pairs: list[BasePair]
    lists: list[WordList]
    queries: list[WordList]
    checksums: dict[str, str]


def _resolve_resources(cfg: dict, synth: SynthResources | None, vocab) -> Resources:
    checksums = {}

    def need_synth(what):
        if synth is None:
            raise ConfigError(f"'{SYNTHETIC}' {what} requested but no ensemble is synthetic")

    bp = cfg["basepairs"]
    if bp == "bundled":
        path = bundled_path("basepairs")
        pairs = read_basepairs(path)
        checksums["basepairs:bundled"] = sha256_file(path)
    elif bp == SYNTHETIC:
        need_synth("base pairs")
        pairs = list(synth.pairs)
    else:
        path = _resolve(cfg, bp)
        pairs = read_basepairs(path)
        checksums[f"basepairs:{path}"] = sha256_file(path)

    lists = []
    for entry in cfg["targets"]:
        if entry in BUNDLED_LISTS:
            path = bundled_path(entry)
            lists.append(read_wordlist(path))
            checksums[f"list:{entry}"] = sha256_file(path)
        elif entry == SYNTHETIC:
            need_synth("target list")
            lists.append(synth.targets)
        elif entry == FULL:
            lists.append(WordList(FULL, tuple(vocab)))
        else:
            path = _resolve(cfg, entry)
            lists.append(read_wordlist(path))
            checksums[f"list:{path}"] = sha256_file(path)

    qentry = cfg["queries"]
    queries = []
    if qentry == "bundled":
        qentry = list(BUNDLED_QUERIES)
    elif qentry == SYNTHETIC:
        need_synth("queries")
        qentry = []
        queries = list(synth.queries)
    for entry in qentry or []:
        path = bundled_path(entry) if entry in BUNDLED_QUERIES else _resolve(cfg, entry)
        queries.append(read_wordlist(path))
        checksums[f"query:{entry}"] = sha256_file(path)
    return Resources(pairs, lists, queries, checksums)


# ----------------------------------------------------------------------------- results

@dataclass
class EnsembleResult:
    name: str
    algorithm: str
    corpus: str
    ensemble: EmbeddingEnsemble
    tensor: BiasTensor
    cube: MeanBiasCube
    files: list[str]
    synth: SynthResources | None = None
    tables: dict[str, str] = field(default_factory=dict)
    stability: StabilityReport | None = None
    features: FeatureTable | None = None


@dataclass
class ReportSet:
    tables: dict[str, list[list]]
    manifest: dict
    written: dict[str, Path] = field(default_factory=dict)

    def csv_text(self, name: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS[name])
        for row in self.tables[name]:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            return "" if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return f"{float(v):.10g}"
    if v is None:
        return ""
    return str(v)


def summarize_distributions(scores) -> dict:
    """Five-number summary, 1.5 x IQR outlier count and share below 0.5.

    NaN entries (degenerate units) are excluded and counted.
    """
    x = np.asarray([s for s in scores], dtype=float)
    n_deg = int(np.count_nonzero(np.isnan(x)))
    x = np.sort(x[~np.isnan(x)])
    if x.size == 0:
        return {"n": 0, "n_degenerate": n_deg, "reason": "no nondegenerate scores"}
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return {
        "n": int(x.size), "n_degenerate": n_deg, "min": float(x[0]), "q1": float(q1),
        "median": float(med), "q3": float(q3), "max": float(x[-1]),
        "iqr_outliers": int(np.count_nonzero((x < lo) | (x > hi))),
        "frac_below_0_5": float(np.count_nonzero(x < 0.5) / x.size),
    }


# ----------------------------------------------------------------------------- stages

def _load_ensembles(cfg: dict, out_dir: Path, timings: dict):
    loaded = []
    # fail fast on missing inputs before any heavy work
    for e in cfg["ensembles"]:
        for f in e.get("files", []):
            p = _resolve(cfg, f)
            if not p.is_file():
                raise StageError("load", str(p), FileNotFoundError("embedding file not found"))
        for key in ("counts", "senses", "pos"):
            val = (e.get("features") or {}).get(key)
            if val and not _resolve(cfg, val).is_file():
                raise StageError("load", str(_resolve(cfg, val)), FileNotFoundError("table not found"))
    t0 = time.perf_counter()
    for e in cfg["ensembles"]:
        name = ensemble_name(e)
        alg, corp = str(e.get("algorithm", "alg")), str(e.get("corpus", "corpus"))
        synth = None
        if "synth" in e:
            params = dict(e["synth"])
            params.setdefault("seed", 0)
            try:
                ens, synth = synth_ensemble(out_dir=out_dir / "synth" / name, algorithm_label=alg,
                                            corpus_label=corp, **params)
            except (TypeError, ValueError) as exc:
                raise StageError("synth", name, exc) from exc
            files = [str(p) for p in synth.files]
            tables = {k: str(v) for k, v in synth.tables.items()}
        else:
            files = [str(_resolve(cfg, f)) for f in e["files"]]
            try:
                ens = load_ensemble(files, e.get("format", "auto"), alg, corp)
            except (OSError, ValueError) as exc:
                raise StageError("load", name, exc) from exc
            tables = {}
        for key in ("counts", "senses", "pos"):
            val = (e.get("features") or {}).get(key)
            if val:
                tables[key] = str(_resolve(cfg, val))
        loaded.append((name, alg, corp, ens, files, synth, tables))
    timings["load"] = time.perf_counter() - t0
    return loaded


def run(cfg: dict, only: tuple[str, ...] | None = None, write: bool = True) -> ReportSet:
    """Run every enabled analysis and (optionally) write the reports.

    ``only`` restricts the emitted tables to the given analyses; their
    prerequisites are still computed.
    """
    if "_base_dir" not in cfg:
        cfg = _merge(DEFAULTS, cfg)
        cfg["_base_dir"] = str(Path.cwd())
        validate_config(cfg)
    toggles = {a: bool(cfg["analyses"].get(a, False)) for a in ANALYSES}
    if only is not None:
        toggles = {a: a in only for a in ANALYSES}
    need = dict(toggles)
    if need["regress"]:
        need.update(retest=True, interrater=True, stability=True, features=True)
    if need["features"]:
        need["stability"] = True

    out_dir = Path(cfg["output_dir"])
    timings: dict[str, float] = {}
    warnings_log: list[str] = []
    loaded = _load_ensembles(cfg, out_dir, timings)

    rules = [ScoringRule(r, int(cfg["nbm"]["k"])) for r in cfg["rules"]]
    synth_res = next((s for *_, s, _ in loaded if s is not None), None)
    res = _resolve_resources(cfg, synth_res, loaded[0][3].vocab)
    all_targets = []
    seen = set()
    for wl in [*res.lists, *res.queries]:
        for w in wl.words:
            if w not in seen:
                seen.add(w)
                all_targets.append(w)

    results: list[EnsembleResult] = []
    t0 = time.perf_counter()
    for name, alg, corp, ens, files, synth, tables in loaded:
        try:
            B = compute_bias_tensor(ens, rules, res.pairs, all_targets,
                                    exclusions=cfg["nbm"]["exclusions"],
                                    exclude_pair_words=bool(cfg["nbm"]["exclude_pair_words"]),
                                    n_jobs=cfg.get("n_jobs"))
        except ValueError as exc:
            raise StageError("score", name, exc) from exc
        results.append(EnsembleResult(name, alg, corp, ens, B, average_over_models(B), files,
                                      synth, tables))
    timings["score"] = time.perf_counter() - t0

    tables: dict[str, list[list]] = {k: [] for k in REPORT_COLUMNS}
    counts: dict[str, Any] = {"dropped": {}, "degenerate": {}, "skipped": {}}
    for r in results:
        counts["dropped"][r.name] = [list(m) for m in r.tensor.missing]

    if need["score"]:
        t0 = time.perf_counter()
        _score_tables(results, res, tables)
        timings["score_tables"] = time.perf_counter() - t0

    per_target_retest: dict[tuple, float] = {}
    per_target_inter: dict[tuple, float] = {}
    pair_scores: dict[str, dict[str, dict[str, list]]] = {}

    if need["retest"]:
        t0 = time.perf_counter()
        for r in results:
            for wl in res.lists:
                ms = build_retest_matrices(r.tensor, wl)
                _note_skips(counts, "retest", r.name, ms)
                for m, sc in zip(ms.matrices, evaluate(ms, ICC21)):
                    tables["retest"].append([r.name, r.algorithm, r.corpus, wl.name, m.unit_type,
                                             m.unit, m.rule, sc.value, sc.band, sc.n, sc.r,
                                             sc.degenerate])
                    if m.unit_type == "target" and not sc.degenerate:
                        per_target_retest[(r.name, m.rule, m.unit)] = sc.value
                    if m.unit_type == "pair" and not sc.degenerate:
                        pair_scores.setdefault(wl.name, {}).setdefault("retest", {}) \
                            .setdefault(m.unit, []).append(sc.value)
        timings["retest"] = time.perf_counter() - t0

    if need["interrater"]:
        t0 = time.perf_counter()
        for r in results:
            for wl in res.lists:
                ms = build_interrater_matrices(r.cube, wl, zscore=bool(cfg["interrater"]["zscore"]))
                _note_skips(counts, "interrater", r.name, ms)
                for m, sc in zip(ms.matrices, evaluate(ms, ICC31)):
                    tables["interrater"].append([r.name, r.algorithm, r.corpus, wl.name,
                                                 m.unit_type, m.unit, sc.value, sc.band, sc.n,
                                                 sc.r, sc.degenerate])
                    if m.unit_type == "target" and not sc.degenerate:
                        per_target_inter[(r.name, m.unit)] = sc.value
                    if m.unit_type == "pair" and not sc.degenerate:
                        pair_scores.setdefault(wl.name, {}).setdefault("interrater", {}) \
                            .setdefault(m.unit, []).append(sc.value)
        timings["interrater"] = time.perf_counter() - t0

    if need["internal"]:
        t0 = time.perf_counter()
        for r in results:
            ms = build_query_matrices(r.cube, res.queries)
            _note_skips(counts, "internal", r.name, ms)
            for m, sc in zip(ms.matrices, evaluate(ms, ALPHA)):
                tables["internal"].append([r.name, r.algorithm, r.corpus, "query", m.unit, "",
                                           m.rule, sc.value, sc.band, sc.r, sc.n, sc.degenerate])
            for wl in res.lists:
                ms = build_pair_ensemble_matrices(r.cube, wl)
                _note_skips(counts, "internal", r.name, ms)
                for m, sc in zip(ms.matrices, evaluate(ms, ALPHA)):
                    tables["internal"].append([r.name, r.algorithm, r.corpus, "basepair_ensemble",
                                               m.unit, wl.name, m.rule, sc.value, sc.band, sc.r,
                                               sc.n, sc.degenerate])
        timings["internal"] = time.perf_counter() - t0

    if need["stability"]:
        t0 = time.perf_counter()
        budget = cfg["stability"].get("pair_budget")
        for r in results:
            try:
                r.stability = embedding_stability(r.ensemble, budget,
                                                  method=cfg["stability"].get("method", "jacobi"))
            except ValueError as exc:
                raise StageError("stability", r.name, exc) from exc
            st = r.stability
            for w, es, used, fl in zip(st.words, st.es, st.pairs_used, st.flagged):
                tables["stability"].append([r.name, w, float(es), int(used), bool(fl)])
        timings["stability"] = time.perf_counter() - t0

    if need["features"]:
        t0 = time.perf_counter()
        for r in results:
            feats_src = {k: r.tables.get(k) for k in ("counts", "senses", "pos")}
            try:
                r.features = build_feature_table(r.ensemble, r.tensor.targets,
                                                 feats_src["counts"], feats_src["senses"],
                                                 feats_src["pos"], r.stability)
            except (OSError, ValueError) as exc:
                raise StageError("features", r.name, exc) from exc
            ft = r.features
            for i, w in enumerate(ft.words):
                c = ft.columns
                tables["features"].append([r.name, w, c["log_freq"][i], c["log2_freq"][i],
                                           c["log_senses"][i], ft.pos[i], c["nn_sim"][i],
                                           c["l2_norm"][i], c["es"][i]])
        timings["features"] = time.perf_counter() - t0

    regression_meta = {}
    if need["regress"]:
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            regression_meta = _regression(results, per_target_retest, per_target_inter, tables)
        warnings_log.extend(str(w.message) for w in caught)
        timings["regress"] = time.perf_counter() - t0

    if need["retest"] or need["interrater"]:
        _pair_tests(pair_scores, cfg["pair_tests"].get("aggregate", "median"), tables)
    _summaries(tables, need)

    emitted = [t for a in ANALYSES if toggles[a] for t in ANALYSIS_REPORTS[a]]
    if toggles["retest"] or toggles["interrater"]:
        emitted.append("pair_tests")
    if any(toggles[a] for a in ("retest", "interrater", "internal")):
        emitted.append("summary")
    for a in ("retest", "interrater", "internal"):
        counts["degenerate"][a] = sum(1 for row in tables[a] if row[-1] is True)

    manifest = {
        "tool": "biasrel", "version": __version__, "python": platform.python_version(),
        "numpy": np.__version__,
        "config": {k: v for k, v in cfg.items() if not k.startswith("_")},
        "analyses": toggles,
        "reports": {},
        "ensembles": [
            {"name": r.name, "algorithm": r.algorithm, "corpus": r.corpus, "k": r.ensemble.k,
             "vocab_size": len(r.ensemble.vocab), "dim": r.ensemble.dim, "files": r.files,
             "file_sha256": {f: sha256_file(f) for f in r.files},
             "dropped_tokens": list(r.ensemble.dropped), "feature_tables": r.tables,
             "synth_recipe": r.synth.recipe if r.synth else None}
            for r in results
        ],
        "resources": res.checksums,
        "rules": [{"kind": ru.kind, "k_neighbors": ru.k_neighbors} for ru in rules],
        "counts": counts,
        "regression": regression_meta,
        "warnings": warnings_log,
        "timings_seconds": timings,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    report = ReportSet({k: tables[k] for k in emitted}, manifest)
    if write:
        write_reports(report, out_dir)
    return report


def _note_skips(counts, analysis, name, ms: MatrixSet):
    if ms.skipped:
        counts["skipped"].setdefault(analysis, {}).setdefault(name, []).extend(
            list(s) for s in ms.skipped)


def _score_tables(results, res: Resources, tables):
    for r in results:
        cube = r.cube
        for s, rule in enumerate(cube.rule_labels):
            for g, pair in enumerate(cube.pair_labels):
                for t, word in enumerate(cube.targets):
                    tables["scores"].append([r.name, rule, pair, word, cube.scores[s, g, t]])
        for rule in cube.rule_labels:
            for word in cube.targets:
                tables["aggregates"].append([r.name, rule, "target", word,
                                             aggregate_target(cube, rule, word)])
            for pair in cube.pair_labels:
                tables["aggregates"].append([r.name, rule, "pair", pair,
                                             aggregate_pair(cube, rule, pair)])
            for q in res.queries:
                present = [w for w in q.words if w in cube._pos["target"]]
                if present:
                    tables["aggregates"].append([r.name, rule, "query", q.name,
                                                 aggregate_query(cube, rule, present)])
        rules = cube.rule_labels
        for wl in res.lists:
            words = [w for w in wl.words if w in cube._pos["target"]]
            if len(words) < 3:
                continue
            vecs = {rule: np.array([aggregate_target(cube, rule, w) for w in words])
                    for rule in rules}
            for i in range(len(rules)):
                for j in range(i + 1, len(rules)):
                    c = pearson_r(vecs[rules[i]], vecs[rules[j]])
                    tables["correlations"].append([r.name, wl.name, rules[i], rules[j], c.r,
                                                   c.t_stat, c.p_two_sided, c.n])


def _pair_tests(pair_scores, aggregate: str, tables):
    agg = {"median": np.median, "mean": np.mean}[aggregate]
    for list_name in sorted(pair_scores):
        by_analysis = pair_scores[list_name]
        for analysis in ("retest", "interrater"):
            scores = by_analysis.get(analysis, {})
            matched = sum(1 for s, p in SINGULAR_PLURAL.items() if s in scores and p in scores)
            if matched < 2:
                continue
            t = singular_plural_test(scores, aggregate)
            tables["pair_tests"].append([list_name, analysis, "paired_t_singular_plural",
                                         t.t_stat, t.df, t.p_two_sided, matched, t.defined])
        rt, ir = by_analysis.get("retest", {}), by_analysis.get("interrater", {})
        common = [p for p in rt if p in ir]
        if len(common) >= 3:
            c = pearson_r([agg(rt[p]) for p in common], [agg(ir[p]) for p in common])
            tables["pair_tests"].append([list_name, "retest_vs_interrater", "pearson_r",
                                         c.r, c.n - 2, c.p_two_sided, c.n, c.defined])


def _summaries(tables, need):
    groups: dict[tuple, list] = {}
    order: list[tuple] = []

    def add(key, value):
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(value)

    for row in tables["retest"] if need["retest"] else []:
        add(("retest", row[0], row[3], row[4], row[6]), row[7])
    for row in tables["interrater"] if need["interrater"] else []:
        add(("interrater", row[0], row[3], row[4], ""), row[6])
    for row in tables["internal"] if need["internal"] else []:
        add(("internal", "", row[5], row[3], row[6]), row[7])
    for key in order:
        s = summarize_distributions(groups[key])
        if s["n"] == 0:
            tables["summary"].append([*key, 0, s["n_degenerate"], *[math.nan] * 7, math.nan])
            continue
        tables["summary"].append([*key, s["n"], s["n_degenerate"], s["min"], s["q1"],
                                  s["median"], s["q3"], s["max"], s["iqr_outliers"],
                                  s["frac_below_0_5"]])


CONTINUOUS = ("log_freq", "log2_freq", "log_senses", "nn_sim", "l2_norm", "es")


def regression_records(results, per_target_retest, per_target_inter):
    """Row dicts for the retest and inter-rater regressions."""
    retest, inter = [], []
    for r in results:
        ft = r.features
        rows = {w: ft.row(w) for w in ft.words}
        for rule in r.tensor.rule_labels:
            for w in r.tensor.targets:
                v = per_target_retest.get((r.name, rule, w))
                if v is None or w not in rows:
                    continue
                retest.append({"y": v, "rule": rule, "algorithm": r.algorithm,
                               "corpus": r.corpus, **rows[w]})
        for w in r.tensor.targets:
            v = per_target_inter.get((r.name, w))
            if v is None or w not in rows:
                continue
            inter.append({"y": v, "algorithm": r.algorithm, "corpus": r.corpus, **rows[w]})
    return retest, inter


def _regression(results, per_target_retest, per_target_inter, tables) -> dict:
    retest, inter = regression_records(results, per_target_retest, per_target_inter)
    meta = {}
    for model, records, categorical in (("retest", retest, ("rule", "pos")),
                                        ("interrater", inter, ("pos",))):
        if not records:
            meta[model] = {"skipped": "no complete rows"}
            continue
        if model == "retest" and len({r["rule"] for r in records}) < 2:
            categorical = ("pos",)
        try:
            ds = standardize(make_dataset(records, "y", CONTINUOUS, categorical))
            fit = fit_lmm(ds, drop_collinear=True)
        except ValueError as exc:
            meta[model] = {"skipped": str(exc)}
            continue
        deltas = {}
        for factor in ds.factors:
            deltas[factor] = delta_r2(ds, factor, full=fit)
        pvals = fit.wald_p()
        factor_of = {c.name: c.factor for c in ds.columns}
        reported = set()
        for name, b, se, p in zip(fit.names, fit.beta, fit.se, pvals):
            if name == "intercept":
                continue
            fac = factor_of[name]
            d = deltas.get(fac) if fac not in reported else None
            reported.add(fac)
            tables["regression"].append([model, name, b, se, p, bool(p < 0.05),
                                         math.nan if d is None else d])
        for key in ("r2_fixed", "r2_corpus", "r2_algorithm", "r2_total"):
            tables["regression"].append([model, key, getattr(fit, key), math.nan, math.nan,
                                         "", math.nan])
        for key in ("sigma2_nu", "sigma2_mu", "sigma2_eps"):
            tables["regression"].append([model, key, getattr(fit, key), math.nan, math.nan,
                                         "", math.nan])
        meta[model] = {"n": ds.n, "dropped_rows": ds.dropped_rows, "converged": fit.converged,
                       "loglik": fit.loglik, "dropped_columns": list(fit.dropped_columns),
                       "notes": list(fit.notes), "significance": "approximate Wald z-test"}
    return meta


def write_reports(report: ReportSet, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checks = {}
    for name in report.tables:
        path = out / f"{name}.csv"
        path.write_text(report.csv_text(name), encoding="utf-8")
        report.written[name] = path
        checks[f"{name}.csv"] = sha256_file(path)
    report.manifest["reports"] = checks
    (out / "manifest.json").write_text(json.dumps(report.manifest, indent=2, default=_json_default)
                                       + "\n", encoding="utf-8")
    return report.written


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")
