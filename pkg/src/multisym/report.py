"""Deterministic report payloads and their text, JSON and LaTeX renderings."""

from __future__ import annotations

import hashlib
import json

from . import __version__
from .constraints import ConstraintReport, on_sections
from .exterior import DiffForm, VectorField
from .geometry import liouville_forms
from .noether import NotExactSymmetry, momentum_map, verify_symmetry
from .session import TheorySession
from .symkernel import Expr

SCHEMA_VERSION = 1


def formula(obj) -> dict:
    """Text and LaTeX renderings of an Expr, DiffForm or VectorField."""
    if isinstance(obj, DiffForm):
        from .exterior import render_form
        return {"text": render_form(obj), "latex": render_form(obj, latex=True)}
    if isinstance(obj, (Expr, VectorField)):
        return {"text": obj.text(), "latex": obj.latex()}
    raise TypeError(f"cannot render {type(obj).__name__}")


def _is_formula(value) -> bool:
    return isinstance(value, dict) and set(value) == {"text", "latex"}


def envelope(command: str, payload: dict, options: dict, theory=None, source: bytes | None = None,
             assumptions=()) -> dict:
    report = {
        "tool": "multisym",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "input": None,
        "options": dict(sorted(options.items())),
        "payload": payload,
        "assumptions": sorted(set(assumptions)),
    }
    if theory is not None:
        report["input"] = {
            "theory": theory.name,
            "source_sha256": hashlib.sha256(source or b"").hexdigest(),
            "spec_digest": theory.digest,
        }
    return report


# ---------------------------------------------------------------------------
# Payloads


def liouville_payload(session: TheorySession) -> dict:
    theta, omega = liouville_forms(session.tower.chart("MPI"))
    return {"space": "MPI", "theta": formula(theta), "omega": formula(omega)}


def constraint_entries(entries) -> list:
    return [{"family": e.family, "label": e.label, "stage": e.stage, "value": formula(e.expr)} for e in entries]


def _stage_summary(report: ConstraintReport, stage: str) -> str:
    label = "SOPDE" if stage == "sopde" else stage
    entries = getattr(report, stage)
    if not entries:
        return f"no {label} constraints"
    families = sorted(report.families(stage))
    noun = "family" if len(families) == 1 else "families"
    return f"{len(entries)} {label} constraints in {len(families)} {noun} ({', '.join(families)})"


def constraints_payload(report: ConstraintReport) -> dict:
    tangency_total = sum(len(r) for r in report.tangency)
    summary = [_stage_summary(report, "compatibility")]
    if report.side == "lagrangian":
        summary.append(_stage_summary(report, "sopde"))
    summary.append("no tangency constraints" if not tangency_total else f"{tangency_total} tangency constraints")
    if not report.final:
        summary.append("final constraint submanifold equals the starting space")
    families = {}
    for stage in ("compatibility", "sopde"):
        families[stage] = {k: len(v) for k, v in sorted(report.families(stage).items())}
    return {
        "side": report.side,
        "space": report.space,
        "status": report.status,
        "stage_order": report.stage_order,
        "summary": summary,
        "families": families,
        "compatibility": constraint_entries(report.compatibility),
        "sopde": constraint_entries(report.sopde),
        "tangency": [constraint_entries(r) for r in report.tangency],
        "redundant": [{"label": label, "stage": stage} for label, stage in report.redundant],
        "final_count": len(report.final),
    }


def _legendre_payload(session: TheorySession) -> dict:
    lmap = session.legendre_map
    momenta = [{"coordinate": q.name, "value": formula(v)} for q, v in lmap.momenta.items()]
    out = {"regular": lmap.regular, "momenta": momenta, "pscalar": formula(lmap.pscalar_image)}
    if not lmap.regular:
        out["primary_constraints"] = [{"coordinate": q.name, "value": formula(v)} for q, v in lmap.primary.items()]
    return out


def derive_lagrangian(session: TheorySession) -> tuple[dict, list]:
    lag = session.require_lagrangian()
    assumptions = list(session.theory.assumptions)
    payload = {
        "side": "lagrangian",
        "liouville": liouville_payload(session),
        "lagrangian": formula(lag.lagrangian),
        "energy": formula(lag.energy),
        "theta": formula(lag.theta),
        "omega": formula(lag.omega),
        "hessian": {"rank": lag.hessian_rank, "size": len(lag.chart.jets), "regular": lag.is_regular},
    }
    payload["legendre"] = _legendre_payload(session)
    assumptions += session.legendre_map.assumptions
    ham = session.hamiltonian_theory
    payload["hamiltonian"] = {"space": "P0" if ham.singular else "J1STAR", "value": formula(ham.hamiltonian)}
    report = session.constraint_report("lagrangian")
    assumptions += report.assumptions
    payload["field_equations"] = [formula(e) for e in on_sections(report)]
    payload["constraints"] = constraints_payload(report)["summary"]
    return payload, assumptions


def derive_hamiltonian(session: TheorySession) -> tuple[dict, list]:
    ham = session.hamiltonian_theory
    assumptions = list(session.theory.assumptions) + list(ham.assumptions)
    payload = {
        "side": "hamiltonian",
        "liouville": liouville_payload(session),
        "space": "P0" if ham.singular else "J1STAR",
        "hamiltonian": formula(ham.hamiltonian),
        "primary_constraints": [{"coordinate": q.name, "value": formula(v)}
                                for q, v in ham.chart.substitutions.items()],
        "theta": formula(ham.theta),
        "omega": formula(ham.omega),
    }
    if session.lagrangian_theory is not None:
        payload["legendre"] = _legendre_payload(session)
    report = session.constraint_report("hamiltonian")
    assumptions += report.assumptions
    payload["field_equations"] = [formula(e) for e in on_sections(report)]
    payload["constraints"] = constraints_payload(report)["summary"]
    return payload, assumptions


def derive_payload(session: TheorySession, side: str) -> tuple[dict, list]:
    theory = session.theory
    if theory.lagrangian is None and theory.hamiltonian is None:
        payload = {"side": side, "liouville": liouville_payload(session),
                   "notes": ["theory declares no density; only the canonical forms are reported"]}
        return payload, list(theory.assumptions)
    if side == "lagrangian":
        return derive_lagrangian(session)
    return derive_hamiltonian(session)


def lift_spaces(session: TheorySession) -> list:
    spaces = ["E"]
    if session.lagrangian_theory is not None:
        spaces.append("J1")
    spaces += ["MPI", "J1STAR"]
    if session.theory.lagrangian is not None or session.theory.hamiltonian is not None:
        if session.hamiltonian_theory.singular:
            spaces.append("P0")
    return spaces


def noether_generator_payload(session: TheorySession, name: str, space: str) -> tuple[dict, list]:
    lifts = {sp: formula(session.lift(name, sp)) for sp in lift_spaces(session)}
    Y = session.lift(name, space)
    verdict = verify_symmetry(session, Y, space, name)
    entry = {
        "generator": name,
        "space": space,
        "lifts": lifts,
        "verdict": {
            "exact": verdict.exact,
            "cartan": verdict.cartan,
            "natural": verdict.natural,
            "lagrangian_invariant": verdict.lagrangian_invariant,
            "exact_on_constraints": verdict.exact_on_constraints,
            "cartan_on_constraints": verdict.cartan_on_constraints,
            "residuals": {k: formula(v) for k, v in sorted(verdict.residuals.items())},
            "notes": list(verdict.notes),
        },
        "momentum_map": None,
    }
    if space != "E" and verdict.exact:
        try:
            J = momentum_map(session, Y, space, name)
        except NotExactSymmetry as exc:
            entry["momentum_map_error"] = str(exc)
        else:
            entry["momentum_map"] = {"form": formula(J.form), "construction": J.construction,
                                     "closure_residual_zero": J.closure_residual.is_zero(), "notes": list(J.notes)}
    return entry, []


def noether_payload(session: TheorySession, generators, space: str) -> tuple[dict, list]:
    entries = []
    assumptions = list(session.theory.assumptions)
    for name in generators:
        entry, extra = noether_generator_payload(session, name, space)
        entries.append(entry)
        assumptions += extra
    if space in ("J1", "P0") and session.lagrangian_theory is not None:
        side = "lagrangian" if space == "J1" else "hamiltonian"
        if session.final_constraints(space):
            assumptions += session.constraint_report(side).assumptions
    return {"space": space, "generators": entries}, assumptions


def verify_payload(results) -> dict:
    checks = [{"name": r.name, "group": r.group, "passed": r.passed, "detail": r.detail} for r in results]
    passed = sum(1 for r in results if r.passed)
    return {"checks": checks, "passed": passed, "failed": len(results) - passed, "total": len(results)}


# ---------------------------------------------------------------------------
# Renderers


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _text_lines(value, indent: int, key: str | None, latex: bool) -> list:
    pad = "  " * indent
    head = f"{pad}{key}:" if key is not None else f"{pad}-"
    if _is_formula(value):
        return [f"{head} {value['latex' if latex else 'text']}"]
    if isinstance(value, dict):
        if not value:
            return [f"{head} {{}}"]
        lines = [head]
        for k, v in value.items():
            lines += _text_lines(v, indent + 1, str(k), latex)
        return lines
    if isinstance(value, list):
        if not value:
            return [f"{head} []"]
        lines = [head]
        for v in value:
            if isinstance(v, dict) and v and not _is_formula(v):
                item = []
                for k, sub in v.items():
                    item += _text_lines(sub, indent + 2, str(k), latex)
                item[0] = pad + "  - " + item[0][len(pad) + 4:]
                lines += item
            else:
                lines += _text_lines(v, indent + 1, None, latex)
        return lines
    if value is None:
        shown = "none"
    elif isinstance(value, bool):
        shown = "yes" if value else "no"
    else:
        shown = str(value)
    return [f"{head} {shown}"]


def _header(report: dict) -> list:
    lines = [f"{report['tool']} {report['version']} {report['command']}"]
    if report["input"]:
        inp = report["input"]
        lines += [f"theory: {inp['theory']}", f"source sha256: {inp['source_sha256']}",
                  f"spec digest: {inp['spec_digest']}"]
    if report["options"]:
        lines.append("options: " + ", ".join(f"{k}={v}" for k, v in report["options"].items()))
    return lines


def render_text(report: dict) -> str:
    if report["command"] == "verify-paper":
        return render_verify_table(report)
    lines = _header(report)
    for k, v in report["payload"].items():
        lines += _text_lines(v, 0, k, latex=False)
    lines.append("assumptions:")
    lines += [f"  - {a}" for a in report["assumptions"]] or ["  none"]
    return "\n".join(lines) + "\n"


def render_latex(report: dict) -> str:
    out = ["% " + line for line in _header(report)]

    def walk(value, path):
        if _is_formula(value):
            label = ".".join(path).replace("_", "\\_")
            out.append(f"\\paragraph{{{label}}}")
            out.append(f"\\[ {value['latex']} \\]")
        elif isinstance(value, dict):
            for k, v in value.items():
                walk(v, path + [str(k)])
        elif isinstance(value, list):
            for i, v in enumerate(value):
                walk(v, path + [str(i)])
        elif value is not None:
            label = ".".join(path).replace("_", "\\_")
            shown = str(value).replace("_", "\\_")
            out.append(f"% {label} = {shown}")

    walk(report["payload"], [])
    out.append("% assumptions: " + "; ".join(report["assumptions"]))
    return "\n".join(out) + "\n"


def render_verify_table(report: dict) -> str:
    payload = report["payload"]
    rows = payload["checks"]
    width = max([len(r["name"]) for r in rows] + [5])
    lines = [f"{report['tool']} {report['version']} verify-paper", ""]
    lines.append(f"{'check'.ljust(width)}  result  detail")
    lines.append(f"{'-' * width}  ------  ------")
    for r in rows:
        lines.append(f"{r['name'].ljust(width)}  {'PASS' if r['passed'] else 'FAIL':6}  {r['detail']}")
    lines.append("")
    lines.append(f"{payload['passed']} passed, {payload['failed']} failed, {payload['total']} total")
    return "\n".join(lines) + "\n"


RENDERERS = {"text": render_text, "json": render_json, "latex": render_latex}


def render(report: dict, fmt: str) -> str:
    return RENDERERS[fmt](report)
