"""Stage orchestration, certificates, caching and fault injection."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .coeffring import ScalarPoly, TAU_ABS2
from .ncalg import NCPoly, b0, dk, kpow, normal_word, word_to_text
from .symbolcalc import (GradedSymbol, composition_residual, grading_violations,
                         laplacian_symbol, parametrix)
from .serialize import ncpoly_to_text, parse_ncpoly, parse_symbol, symbol_to_text
from .integrate import Reduction, reduce_b2, split_by_class
from .modular import (ModularExpr, SpectralFn, assemble_premain, compute_K, conclude,
                      exp_form_certificate, modular_terms_from_json, regroup_f)

CACHE_ENV = "NCZETA_CACHE_DIR"
FAULT_STAGES = ("symbol", "b2", "rlist", "radial", "modular_terms", "modular", "f")
GOLDEN_FILES = ("b2_reference.terms", "r_list.terms", "all_left_result.terms", "post_ibp.terms",
                "premain.json")


class GoldenMissing(FileNotFoundError):
    pass


# -- fault injection -------------------------------------------------------------------

@dataclass(frozen=True)
class FaultSpec:
    """Add ``delta`` to one rational coefficient of the output of ``stage``.

    ``index`` picks the term in canonical order (wrapping around)."""
    stage: str
    index: int = 0
    delta: Fraction = Fraction(1, 1000)

    def __post_init__(self):
        if self.stage not in FAULT_STAGES:
            raise ValueError(f"unknown fault stage {self.stage!r}; choose from {FAULT_STAGES}")


def _bump(c: ScalarPoly, delta: Fraction) -> ScalarPoly:
    items = c.sorted_items()
    mono = items[0][0] if items else None
    if mono is None:
        return ScalarPoly.const(delta)
    return c + ScalarPoly({mono: delta})


def _perturb_ncpoly(x: NCPoly, fault: FaultSpec) -> NCPoly:
    words = sorted(x.terms, key=word_to_text)
    if not words:
        return NCPoly.scalar(fault.delta, x.stage)
    w = words[fault.index % len(words)]
    terms = dict(x.terms)
    terms[w] = _bump(terms[w], fault.delta)
    return NCPoly(terms, x.stage)


def _perturb_dict(d: dict, fault: FaultSpec) -> dict:
    keys = sorted(d, key=repr)
    out = dict(d)
    k = keys[fault.index % len(keys)]
    out[k] = _bump(out[k], fault.delta)
    return out


def _perturb_spectral(s: SpectralFn, fault: FaultSpec) -> SpectralFn:
    return SpectralFn(_perturb_dict(s.terms, fault))


def _perturb_expr(e: ModularExpr, fault: FaultSpec) -> ModularExpr:
    keys = sorted(e.slots)
    k = keys[fault.index % len(keys)]
    slots = dict(e.slots)
    slots[k] = _perturb_spectral(slots[k], fault)
    return ModularExpr(slots, e.prefactor)


def _perturb_symbol(sym: GradedSymbol, fault: FaultSpec) -> GradedSymbol:
    order = sym.orders()[fault.index % len(sym.orders())]
    comps = dict(sym.components)
    comps[order] = _perturb_ncpoly(comps[order], FaultSpec(fault.stage, fault.index // 3,
                                                          fault.delta))
    return GradedSymbol(comps, sym.s)


def make_injector(fault: FaultSpec | None):
    def inject(stage, value):
        if fault is None or fault.stage != stage:
            return value
        if isinstance(value, NCPoly):
            return _perturb_ncpoly(value, fault)
        if isinstance(value, GradedSymbol):
            return _perturb_symbol(value, fault)
        if isinstance(value, ModularExpr):
            return _perturb_expr(value, fault)
        if isinstance(value, SpectralFn):
            return _perturb_spectral(value, fault)
        if isinstance(value, dict):
            return _perturb_dict(value, fault)
        raise TypeError(f"cannot perturb {type(value).__name__}")
    return inject


# -- golden data and caching -------------------------------------------------------------

def golden_dir(path: str | os.PathLike | None = None) -> Path:
    if path is None:
        return Path(str(resources.files("nczeta") / "golden"))
    p = Path(path)
    if not p.is_dir():
        raise GoldenMissing(f"golden directory not found: {p}")
    return p


def load_golden(path=None) -> dict:
    d = golden_dir(path)
    out = {}
    for name in GOLDEN_FILES:
        f = d / name
        if not f.is_file():
            raise GoldenMissing(f"golden file not found: {f}")
        text = f.read_text()
        if name.endswith(".json"):
            doc = json.loads(text)
            out[name] = {"direct": parse_ncpoly("# nczeta term-list stage=final\n"
                                                + "\n".join(doc["direct"]) + "\n"),
                         "modular": modular_terms_from_json(doc["modular"])}
        else:
            out[name] = parse_ncpoly(text)
    return out


def engine_hash() -> str:
    """Content hash of the modules that determine the symbol and the parametrix."""
    h = hashlib.sha256()
    for mod in ("coeffring.py", "ncalg.py", "symbolcalc.py", "serialize.py"):
        h.update((Path(__file__).parent / mod).read_bytes())
    return h.hexdigest()[:16]


def cache_dir() -> Path:
    base = os.environ.get(CACHE_ENV)
    return Path(base) if base else Path.home() / ".cache" / "nczeta"


def cached_parametrix(order: int, use_cache: bool = True) -> GradedSymbol:
    if not use_cache:
        return parametrix(order)
    path = cache_dir() / f"parametrix-{order}-{engine_hash()}.terms"
    if path.is_file():
        try:
            return parse_symbol(path.read_text())
        except ValueError:
            pass
    sym = parametrix(order)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(symbol_to_text(sym))
        tmp.replace(path)
    except OSError:
        pass
    return sym


def checksum(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- certificates -------------------------------------------------------------------

SPOT_CHECKS = [
    # (word atoms, xi monomial, expected tau polynomial)
    ((b0(1), kpow(1), dk(2, 0), b0(1)), {}, ScalarPoly.const(-1)),
    ((b0(2), kpow(2), dk(1, 0), dk(1, 0), b0(1)), {"xi1": 2}, ScalarPoly.const(6)),
    ((b0(3), kpow(4), dk(1, 0), b0(1), kpow(1), dk(1, 0), b0(1), kpow(1)), {"xi1": 6},
     ScalarPoly.const(8)),
    ((b0(2), kpow(3), dk(0, 1), b0(2), kpow(3), dk(0, 1), b0(1)), {"xi2": 6}, 4 * TAU_ABS2 ** 4),
]


def spot_check(b2: NCPoly) -> list:
    rows = []
    for atoms, xi, want in SPOT_CHECKS:
        w = normal_word(atoms)
        coeff = b2.coefficient(w)
        got = coeff.split("xi1", "xi2").get((xi.get("xi1", 0), xi.get("xi2", 0)), ScalarPoly())
        rows.append({"word": word_to_text(w), "xi": xi, "expected": want.to_text(),
                     "got": got.to_text(), "pass": got == want})
    return rows


def _diff_report(got: NCPoly, want: NCPoly, limit: int = 5) -> dict:
    d = got - want
    first = sorted(d.terms.items(), key=lambda wc: word_to_text(wc[0]))[:limit]
    return {"pass": not d, "mismatched_words": len(d),
            "first": [{"word": word_to_text(w), "residual": c.to_text()} for w, c in first]}


def _terms_diff(got: dict, want: dict) -> dict:
    keys = set(got) | set(want)
    bad = sorted((k for k in keys if got.get(k, ScalarPoly()) != want.get(k, ScalarPoly())),
                 key=repr)
    return {"pass": not bad, "mismatched_terms": len(bad),
            "first": [{"m": k.m, "twist": str(k.twist), "i": k.i, "j": k.j,
                       "got": got.get(k, ScalarPoly()).to_text(),
                       "expected": want.get(k, ScalarPoly()).to_text()} for k in bad[:5]]}


@dataclass
class PipelineResult:
    stages: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    reduction: Reduction | None = None
    expr: ModularExpr | None = None
    f: SpectralFn | None = None
    conclusion: dict | None = None

    def add(self, name: str, passed: bool, informational: bool = False, **details):
        self.stages.append({"stage": name, "pass": bool(passed),
                            "informational": informational, **details})

    def add_report(self, name: str, details: dict, informational: bool = False, **extra):
        details = dict(details)
        passed = details.pop("pass")
        self.add(name, passed, informational, **details, **extra)

    @property
    def passed(self) -> bool:
        return all(s["pass"] for s in self.stages if not s["informational"])

    def failures(self) -> list:
        return [s["stage"] for s in self.stages if not s["pass"] and not s["informational"]]

    def report(self) -> dict:
        return {"format": "nczeta verification report", "pass": self.passed,
                "failed_stages": self.failures(), "stages": self.stages,
                "conclusion": self.conclusion}


STAGE_ERRORS = (ArithmeticError, ValueError, KeyError, TypeError)


def parametrix_stage(res: PipelineResult, gold: dict, inject, use_cache: bool) -> NCPoly:
    sigma = inject("symbol", laplacian_symbol())
    if sigma != laplacian_symbol():
        sym = parametrix(2, sigma)
    else:
        sym = cached_parametrix(2, use_cache)
    b2 = inject("b2", sym[-4])
    comps = dict(sym.components)
    comps[-4] = b2
    sym = GradedSymbol(comps, sym.s)
    residual = composition_residual(2, laplacian_symbol(), sym)
    res.add("parametrix_composition", not residual, failing_orders=sorted(residual))
    violations = grading_violations(sym)
    res.add("grading", not violations, violations=len(violations))
    spots = spot_check(b2)
    b2_text = ncpoly_to_text(b2)
    res.artifacts["b2"] = b2_text
    res.add("b2_spot_checks", all(r["pass"] for r in spots), checks=spots,
            terms=len(b2), checksum=checksum(b2_text))
    res.add_report("b2_vs_reference", _diff_report(b2, gold["b2_reference.terms"]),
                   informational=True)
    return b2


def reduce_stage(res: PipelineResult, b2: NCPoly, gold: dict, inject) -> Reduction:
    red = reduce_b2(b2, inject)
    res.reduction = red
    res.artifacts["r_list"] = ncpoly_to_text(red.r_list)
    res.add_report("r_list", _diff_report(red.r_list, gold["r_list.terms"]),
                   terms=len(red.r_list), checksum=checksum(res.artifacts["r_list"]))
    groups = split_by_class(red.r_list)
    counts = {k: len(v) for k, v in groups.items()}
    res.add("classification", sum(counts.values()) == len(red.r_list), counts=counts)
    res.add_report("all_left_closed_form",
                   _diff_report(red.all_left_result, gold["all_left_result.terms"]))
    res.add_report("post_ibp", _diff_report(red.post_ibp, gold["post_ibp.terms"]),
                   terms=len(red.post_ibp))
    premain = gold["premain.json"]
    res.add_report("modular_terms", _terms_diff(red.modular, premain["modular"]),
                   terms=len(red.modular))
    return red


def modular_stage(res: PipelineResult, red: Reduction, inject) -> None:
    expr = inject("modular", assemble_premain(red.modular, red.all_left_result))
    res.expr = expr
    res.artifacts["modular"] = json.dumps(expr.to_json(), sort_keys=True, indent=1) + "\n"
    f, regroup_cert = regroup_f(expr)
    res.add_report("regroup_f", regroup_cert)
    f = inject("f", f)
    res.f = f
    h, h_cert = exp_form_certificate(f)
    res.add("h_identity", h_cert["h_match"], **h_cert)
    _, k_cert = compute_K(h, strict=False)
    res.add_report("K_odd", k_cert)
    res.conclusion = conclude(expr, regroup_cert, k_cert, h_cert)
    res.add("conclusion", res.conclusion["proved"], statement=res.conclusion.get("conclusion"))


def run_pipeline(golden=None, fault: FaultSpec | None = None, use_cache: bool = True,
                 stop_after: str | None = None, b2: NCPoly | None = None) -> PipelineResult:
    """Every stage from the Laplacian symbol to the conclusion, with certificates.

    A stage that raises is recorded as failed (with the error) and ends the run.
    Passing ``b2`` skips the parametrix stage and reduces the given term list.
    """
    inject = make_injector(fault)
    res = PipelineResult()
    gold = load_golden(golden)
    current = "parametrix"
    try:
        if b2 is None:
            b2 = parametrix_stage(res, gold, inject, use_cache)
        if stop_after == "parametrix":
            return res
        current = "reduce"
        red = reduce_stage(res, b2, gold, inject)
        if stop_after == "reduce":
            return res
        current = "modular"
        modular_stage(res, red, inject)
    except STAGE_ERRORS as exc:
        res.add(f"{current}_error", False, error=f"{type(exc).__name__}: {exc}")
    return res


def oracle_bundle(res: PipelineResult):
    """What the matrix oracle needs from a finished pipeline run."""
    from types import SimpleNamespace
    red = res.reduction
    return SimpleNamespace(terms=red.modular, direct=red.all_left_result, expr=res.expr, f=res.f,
                           unsymmetrized=red.modular_unsymmetrized,
                           groups=split_by_class(red.r_list))


def render_text(report: dict) -> str:
    lines = []
    for s in report["stages"]:
        mark = "PASS" if s["pass"] else ("NOTE" if s.get("informational") else "FAIL")
        extra = ""
        if "mismatched_words" in s and s["mismatched_words"]:
            extra = f" ({s['mismatched_words']} mismatched words; first: {s['first'][0]['word']})"
        if "mismatched_terms" in s and s["mismatched_terms"]:
            extra = f" ({s['mismatched_terms']} mismatched terms)"
        if "checksum" in s:
            extra += f" [sha256 {s['checksum']}]"
        lines.append(f"{mark:4}  {s['stage']}{extra}")
    if "oracle" in report:
        o = report["oracle"]
        lines.append(f"{'PASS' if o['pass'] else 'FAIL':4}  oracle battery "
                     f"({o['trials']} trials, dims {o['dims']})")
        for name, row in sorted(o["summary"].items()):
            lines.append(f"        {name}: worst {row['worst']:.2e}, "
                         f"{row['failures']}/{row['runs']} failures")
    concl = report.get("conclusion") or {}
    if concl.get("conclusion"):
        lines.append(concl["conclusion"])
    else:
        lines.append("conclusion not established: " + ", ".join(report.get("failed_stages", [])))
    return "\n".join(lines) + "\n"
