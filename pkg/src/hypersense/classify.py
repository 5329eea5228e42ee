"""Candidate matching against a channel plan and identification verdicts.

A channel plan lists frequency bands and, per band, candidate signal
signatures (expected bandwidth, cyclic features, templates).  Detected
components are matched against the plan, a sensing method is selected per
candidate from the method registry, and the collected evidence is
rendered into a verdict.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


from .errors import ParameterError
from .noisefloor import DetectedComponent
from .sensing import (
    METHOD_AUTOCORR,
    METHOD_CYCLO,
    METHOD_ENERGY,
    METHOD_MATCHED_FILTER,
    METHOD_TEMPLATE_MATCH,
    Evidence,
    require_method,
)

VERDICT_IDENTIFIED = "identified"
VERDICT_DETECTED_UNIDENTIFIED = "detected_unidentified"
VERDICT_LOW_CONFIDENCE = "low_confidence"

BW_SLACK = 0.25  # fractional widening of the expected bandwidth range


@dataclass
class CyclicFeature:
    freq_hz: float
    tolerance_hz: float


@dataclass
class CpFeature:
    useful_s: float
    cp_s: float
    tolerance_s: float


@dataclass
class CandidateSignature:
    label: str
    expected_bw_hz: tuple[float, float]
    cyclic_features_hz: list[CyclicFeature] = field(default_factory=list)
    burst_header: dict | None = None          # {"period_hz": ...}
    preamble_template_id: str | None = None
    spectral_template_id: str | None = None
    preferred_method: str | None = None
    dimension: str = ""
    cp_feature: CpFeature | None = None
    carrier_spacing_hz: float = 0.0
    max_carriers: int = 1

    def validate(self) -> None:
        lo, hi = self.expected_bw_hz
        if lo > hi:
            raise ParameterError(f"{self.label}: expected_bw_hz min {lo} > max {hi}")


@dataclass
class ChannelPlanEntry:
    name: str
    band_hz: tuple[float, float]
    candidates: list[CandidateSignature]

    def validate(self) -> None:
        lo, hi = self.band_hz
        if lo >= hi:
            raise ParameterError(f"plan entry {self.name}: band low {lo} >= high {hi}")
        for cand in self.candidates:
            cand.validate()


@dataclass
class ChannelPlan:
    name: str
    entries: list[ChannelPlanEntry]


@dataclass
class MatchedFeature:
    kind: str            # "cyclic", "carrier_spacing", "cp", "preamble", "spectral_template"
    expected: float
    measured: float


@dataclass
class IdentificationVerdict:
    component: DetectedComponent
    candidates_ranked: list[str]
    verdict: str
    label: str | None
    matched_features: list[MatchedFeature]
    evidence: list[Evidence]
    extras: dict = field(default_factory=dict)


# -- plan loading ------------------------------------------------------------

def plan_from_dict(data: dict) -> ChannelPlan:
    try:
        entries = []
        for e in data.get("entries", []):
            candidates = []
            for c in e.get("candidates", []):
                feats = [
                    CyclicFeature(float(f["freq_hz"]), float(f["tolerance_hz"]))
                    for f in c.get("cyclic_features_hz", [])
                ]
                cp = c.get("cp_feature")
                candidates.append(
                    CandidateSignature(
                        label=c["label"],
                        expected_bw_hz=(float(c["expected_bw_hz"][0]), float(c["expected_bw_hz"][1])),
                        cyclic_features_hz=feats,
                        burst_header=c.get("burst_header"),
                        preamble_template_id=c.get("preamble_template_id"),
                        spectral_template_id=c.get("spectral_template_id"),
                        preferred_method=c.get("preferred_method"),
                        dimension=c.get("dimension", ""),
                        cp_feature=CpFeature(
                            float(cp["useful_s"]), float(cp["cp_s"]), float(cp["tolerance_s"])
                        )
                        if cp
                        else None,
                        carrier_spacing_hz=float(c.get("carrier_spacing_hz", 0.0)),
                        max_carriers=int(c.get("max_carriers", 1)),
                    )
                )
            entries.append(
                ChannelPlanEntry(
                    name=e["name"],
                    band_hz=(float(e["band_hz"][0]), float(e["band_hz"][1])),
                    candidates=candidates,
                )
            )
        plan = ChannelPlan(name=data.get("name", ""), entries=entries)
    except (KeyError, TypeError, IndexError) as exc:
        raise ParameterError(f"bad channel plan: {exc}") from exc
    for entry in plan.entries:
        entry.validate()
    return plan


def load_plan(path: str | Path) -> ChannelPlan:
    return plan_from_dict(json.loads(Path(path).read_text()))


# -- SCB: spectral matching ---------------------------------------------------

def scb_match(component: DetectedComponent, plan: ChannelPlan) -> list[CandidateSignature]:
    """Rank plan candidates that fit the component's center and bandwidth.

    The component center (absolute Hz) must fall inside the entry band and
    the estimated width inside the candidate's expected bandwidth range
    widened by 25% on both ends.  Candidates are ordered by how close the
    estimate sits to the range midpoint; duplicates (same label) keep
    their best rank.  The ordering is a total order, so plan permutations
    cannot change the result.
    """
    fc = component.center
    bw = component.width
    scored: list[tuple[float, str, CandidateSignature]] = []
    for entry in plan.entries:
        if not entry.band_hz[0] <= fc <= entry.band_hz[1]:
            continue
        for cand in entry.candidates:
            lo, hi = cand.expected_bw_hz
            if not lo * (1.0 - BW_SLACK) <= bw <= hi * (1.0 + BW_SLACK):
                continue
            midpoint = (lo + hi) / 2.0
            scored.append((abs(bw - midpoint), cand.label, cand))
    scored.sort(key=lambda item: (item[0], item[1]))
    out, seen = [], set()
    for _, label, cand in scored:
        if label not in seen:
            seen.add(label)
            out.append(cand)
    return out


# -- SSMSB: method selection ---------------------------------------------------

def ssmsb_select(candidate: CandidateSignature) -> str:
    """Pick the sensing method a candidate's signature calls for.

    An explicit ``preferred_method`` wins (and must name an implemented
    registry row).  Otherwise: cyclic features select the cyclic scan,
    a preamble template the matched filter, a repeated-tail (CP/midamble)
    feature the autocorrelation detector, a spectral template the
    template matcher, and a bare signature falls back to energy detection.
    """
    if candidate.preferred_method:
        return require_method(candidate.preferred_method).key
    if candidate.cyclic_features_hz:
        return METHOD_CYCLO
    if candidate.preamble_template_id:
        return METHOD_MATCHED_FILTER
    if candidate.cp_feature is not None:
        return METHOD_AUTOCORR
    if candidate.spectral_template_id:
        return METHOD_TEMPLATE_MATCH
    return METHOD_ENERGY


# -- decision ------------------------------------------------------------------

def _peak_alpha(peak) -> float:
    # line location: the run's maximum, not its power centroid
    pos = peak.peak_position
    return peak.center if pos != pos else pos  # NaN check


def _match_cyclic(candidate: CandidateSignature, ev: Evidence) -> list[MatchedFeature]:
    matches = []
    for feat in candidate.cyclic_features_hz:
        hits = [p for p in ev.peaks if abs(_peak_alpha(p) - feat.freq_hz) <= feat.tolerance_hz]
        if hits:
            best = max(hits, key=lambda p: p.peak_value_db)
            matches.append(MatchedFeature("cyclic", feat.freq_hz, _peak_alpha(best)))
    if candidate.carrier_spacing_hz > 0.0 and candidate.max_carriers > 1:
        tol = max((f.tolerance_hz for f in candidate.cyclic_features_hz), default=0.0)
        tol = tol or 0.01 * candidate.carrier_spacing_hz
        for j in range(1, candidate.max_carriers):
            target = j * candidate.carrier_spacing_hz
            hits = [p for p in ev.peaks if abs(_peak_alpha(p) - target) <= tol]
            if hits:
                best = max(hits, key=lambda p: p.peak_value_db)
                matches.append(MatchedFeature("carrier_spacing", target, _peak_alpha(best)))
    return matches


def _match_cp(candidate: CandidateSignature, ev: Evidence) -> list[MatchedFeature]:
    cp = candidate.cp_feature
    if cp is None or "cp_s" not in ev.extras:
        return []
    if (
        abs(ev.extras["useful_s"] - cp.useful_s) <= cp.tolerance_s
        and abs(ev.extras["cp_s"] - cp.cp_s) <= cp.tolerance_s
    ):
        return [
            MatchedFeature("cp", cp.useful_s, ev.extras["useful_s"]),
            MatchedFeature("cp", cp.cp_s, ev.extras["cp_s"]),
        ]
    return []


def match_features(candidate: CandidateSignature, ev: Evidence) -> list[MatchedFeature]:
    if ev.method == METHOD_CYCLO:
        return _match_cyclic(candidate, ev)
    if ev.method == METHOD_AUTOCORR:
        return _match_cp(candidate, ev)
    if ev.method == METHOD_MATCHED_FILTER and ev.detected:
        return [MatchedFeature("preamble", 0.0, float(ev.extras.get("peak_index", 0)))]
    if ev.method == METHOD_TEMPLATE_MATCH and ev.detected:
        return [MatchedFeature("spectral_template", ev.threshold, ev.statistic)]
    return []


def decide(
    candidate: CandidateSignature | None,
    evidences: list[Evidence],
    component: DetectedComponent,
    candidates_ranked: list[str],
) -> IdentificationVerdict:
    """Render the verdict for one component.

    Identification requires at least one matched feature within its
    tolerance.  Evidence produced from an all-tied level histogram (no
    change point) downgrades the verdict to low confidence, since the
    floor threshold that produced it is meaningless.
    """
    tied = any("nfspem_tied" in ev.flags for ev in evidences)
    matched: list[MatchedFeature] = []
    if candidate is not None:
        for ev in evidences:
            matched.extend(match_features(candidate, ev))

    extras: dict = {}
    if candidate is not None and candidate.carrier_spacing_hz > 0.0:
        spacing_hits = {m.expected for m in matched if m.kind == "carrier_spacing"}
        if spacing_hits:
            extras["carrier_count"] = len(spacing_hits) + 1
    chip = next((m for m in matched if m.kind == "cyclic"), None)
    if chip is not None:
        extras["measured_cyclic_hz"] = chip.measured

    if tied:
        verdict = VERDICT_LOW_CONFIDENCE
        label = None
    elif matched:
        verdict = VERDICT_IDENTIFIED
        label = candidate.label if candidate else None
    else:
        verdict = VERDICT_DETECTED_UNIDENTIFIED
        label = None
    return IdentificationVerdict(
        component=component,
        candidates_ranked=candidates_ranked,
        verdict=verdict,
        label=label,
        matched_features=matched,
        evidence=evidences,
        extras=extras,
    )
