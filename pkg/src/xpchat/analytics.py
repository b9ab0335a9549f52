"""Quantitative analyses over session logs.

Reproduces the study-side computations from the conversation logs: time-based
acceptance filtering, conversation-pathway segments, intent-coverage counts,
and per-level Likert response differences between the two chatbot versions.
All functions are pure over the loaded records; the SVG renderer is
byte-deterministic for identical input.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptySession, SpecMismatch
from .session import InteractionEvent, LIKERT_SCALE, QUESTIONNAIRE_ITEM_IDS, SessionRecord

TOO_FAST_FACTOR = 0.3
INACTIVE_FACTOR = 4.0


# ---------------------------------------------------------------------------
# time-based acceptance filtering


@dataclass(frozen=True)
class TimeFlag:
    session_id: str
    verdict: str            # Accept | RejectTooFast | RejectInactive
    total_minutes: float


def _interaction_span_ms(record: SessionRecord) -> int:
    """Total interaction time, excluding free-text writing time."""
    events = record.events
    if not events:
        return 0
    cutoff = events[-1]
    for event in events:
        if event.move["name"] == "service:free_text_prompt":
            cutoff = event
            break
    return cutoff.wall_time_ms - events[0].wall_time_ms


def flag_sessions(records: list[SessionRecord], estimated_minutes: float) -> list[TimeFlag]:
    """Accept/reject each session on total time vs the estimate.

    Too fast: total <= 0.3 x estimate (boundary rejects).  Inactive:
    total >= 4 x estimate (boundary rejects).
    """
    if estimated_minutes <= 0:
        raise ValueError("estimated_minutes must be positive")
    flags = []
    for record in records:
        minutes = _interaction_span_ms(record) / 60000.0
        if minutes <= TOO_FAST_FACTOR * estimated_minutes:
            verdict = "RejectTooFast"
        elif minutes >= INACTIVE_FACTOR * estimated_minutes:
            verdict = "RejectInactive"
        else:
            verdict = "Accept"
        flags.append(TimeFlag(session_id=record.session_id, verdict=verdict,
                              total_minutes=minutes))
    return flags


# ---------------------------------------------------------------------------
# conversation pathways


@dataclass(frozen=True)
class PathwaySegment:
    session_id: str
    index: int
    label: str              # Persona | Target | Intent:<i> | Explanation:<t> | Followup:<k> | Evaluation
    duration_ms: int
    fraction: float


def _event_label(event: InteractionEvent, state: dict) -> str:
    name = event.move["name"]
    if name.startswith("service:"):
        marker = name.split(":", 1)[1]
        if marker == "persona_selected":
            return "Persona"
        if marker == "target_presented":
            return "Target"
        return "Evaluation"
    if name == "begin_question":
        return "Target"
    if name == "return_question":
        state["in_followup"] = None
        return f"Intent:{event.topic['intent']}"
    if name == "begin_explanation":
        return f"Intent:{event.topic['intent']}"
    if name == "followup":
        state["in_followup"] = event.move["kind"]
        return f"Followup:{event.move['kind']}"
    if name == "affirm":
        kind = state.get("in_followup") or event.move["kind"]
        state["in_followup"] = None
        return f"Followup:{kind}"
    if name == "explain":
        if state.get("in_followup"):
            return f"Followup:{state['in_followup']}"
        state["explanation_type"] = event.move["type_id"]
        return f"Explanation:{event.move['type_id']}"
    if name in ("begin_argument", "challenge", "end_argument"):
        return f"Explanation:{state.get('explanation_type', 'unknown')}"
    if name == "end_explanation":
        return "Evaluation"
    return "Evaluation"


def pathway(record: SessionRecord, merge_followups: bool = True) -> list[PathwaySegment]:
    """Contiguous labelled segments with durations relative to session time.

    An event's duration is the gap to the next event (the last event gets 0).
    With ``merge_followups`` (the default, mirroring the published plots)
    followup time is folded into the owning explanation segment.
    """
    events = record.events
    if not events:
        raise EmptySession(record.session_id)
    state: dict = {}
    labelled: list[tuple[str, int]] = []
    for i, event in enumerate(events):
        duration = events[i + 1].wall_time_ms - event.wall_time_ms if i + 1 < len(events) else 0
        labelled.append((_event_label(event, state), duration))

    # contiguous merge
    segments: list[list] = []
    for label, duration in labelled:
        if segments and segments[-1][0] == label:
            segments[-1][1] += duration
        else:
            segments.append([label, duration])

    if merge_followups:
        merged: list[list] = []
        for label, duration in segments:
            if label.startswith("Followup:") and merged:
                owner = merged[-1]
                for candidate in reversed(merged):
                    if candidate[0].startswith("Explanation:"):
                        owner = candidate
                        break
                owner[1] += duration
            else:
                merged.append([label, duration])
        # folding may have made neighbours contiguous again
        segments = []
        for label, duration in merged:
            if segments and segments[-1][0] == label:
                segments[-1][1] += duration
            else:
                segments.append([label, duration])

    total = sum(duration for _l, duration in segments)
    out = []
    for index, (label, duration) in enumerate(segments):
        if total > 0:
            fraction = duration / total
        else:
            fraction = 1.0 if index == 0 else 0.0
        out.append(PathwaySegment(session_id=record.session_id, index=index,
                                  label=label, duration_ms=duration, fraction=fraction))
    return out


# ---------------------------------------------------------------------------
# intent coverage


def intent_coverage(records: list[SessionRecord]) -> tuple[dict[str, int], dict[int, int]]:
    """Sessions engaging each intent, plus the intents-per-session distribution."""
    per_intent: dict[str, int] = {}
    distribution: dict[int, int] = {}
    for record in records:
        intents = {event.topic["intent"] for event in record.events
                   if event.move["name"] == "return_question"}
        for intent in intents:
            per_intent[intent] = per_intent.get(intent, 0) + 1
        distribution[len(intents)] = distribution.get(len(intents), 0) + 1
    return (dict(sorted(per_intent.items())), dict(sorted(distribution.items())))


# ---------------------------------------------------------------------------
# questionnaire diffs


@dataclass(frozen=True)
class LikertDiff:
    item_ids: tuple[str, ...]
    counts_a: dict[str, dict[int, int]]
    counts_b: dict[str, dict[int, int]]
    diff: dict[str, dict[int, int]]     # count_B - count_A per item per level


def _count_responses(records: list[SessionRecord]) -> dict[str, dict[int, int]]:
    counts = {item: {level: 0 for level in range(1, LIKERT_SCALE + 1)}
              for item in QUESTIONNAIRE_ITEM_IDS}
    for record in records:
        if record.questionnaire is None:
            raise SpecMismatch(f"session {record.session_id} has no questionnaire")
        answered = {item for item, _v in record.questionnaire}
        if answered != set(QUESTIONNAIRE_ITEM_IDS):
            raise SpecMismatch(f"session {record.session_id} answered {sorted(answered)}")
        for item, value in record.questionnaire:
            if not 1 <= value <= LIKERT_SCALE:
                raise SpecMismatch(f"session {record.session_id}: response {value} out of scale")
            counts[item][value] += 1
    return counts


def likert_diff(records_a: list[SessionRecord], records_b: list[SessionRecord]) -> LikertDiff:
    counts_a = _count_responses(records_a)
    counts_b = _count_responses(records_b)
    diff = {item: {level: counts_b[item][level] - counts_a[item][level]
                   for level in range(1, LIKERT_SCALE + 1)}
            for item in QUESTIONNAIRE_ITEM_IDS}
    return LikertDiff(item_ids=QUESTIONNAIRE_ITEM_IDS, counts_a=counts_a,
                      counts_b=counts_b, diff=diff)


# ---------------------------------------------------------------------------
# export


def export(result, fmt: str, out_path: str | Path) -> None:
    """Write an analysis result as CSV or JSON with a stable column order."""
    out_path = Path(out_path)
    if fmt == "json":
        out_path.write_text(json.dumps(_to_jsonable(result), indent=2, sort_keys=True) + "\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown export format {fmt!r}")
    out_path.write_text(_to_csv(result))


def _to_jsonable(result):
    if isinstance(result, LikertDiff):
        return {"items": list(result.item_ids),
                "counts_a": result.counts_a, "counts_b": result.counts_b,
                "diff": result.diff}
    if isinstance(result, list) and result and isinstance(result[0], TimeFlag):
        return [{"session_id": f.session_id, "verdict": f.verdict,
                 "total_minutes": f.total_minutes} for f in result]
    if isinstance(result, list) and result and isinstance(result[0], PathwaySegment):
        return [{"session_id": s.session_id, "index": s.index, "label": s.label,
                 "duration_ms": s.duration_ms, "fraction": s.fraction} for s in result]
    if isinstance(result, tuple) and len(result) == 2:  # intent coverage
        return {"per_intent": result[0],
                "intents_per_session": {str(k): v for k, v in result[1].items()}}
    return result


def _to_csv(result) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if isinstance(result, LikertDiff):
        writer.writerow(["item"] + [f"level_{level}" for level in range(1, LIKERT_SCALE + 1)])
        for item in result.item_ids:
            writer.writerow([item] + [result.diff[item][level]
                                      for level in range(1, LIKERT_SCALE + 1)])
    elif isinstance(result, list) and result and isinstance(result[0], TimeFlag):
        writer.writerow(["session_id", "verdict", "total_minutes"])
        for f in result:
            writer.writerow([f.session_id, f.verdict, f"{f.total_minutes:.4f}"])
    elif isinstance(result, list) and result and isinstance(result[0], PathwaySegment):
        writer.writerow(["session_id", "index", "label", "duration_ms", "fraction"])
        for s in result:
            writer.writerow([s.session_id, s.index, s.label, s.duration_ms, f"{s.fraction:.9f}"])
    elif isinstance(result, tuple) and len(result) == 2:
        writer.writerow(["intent", "sessions"])
        for intent, count in result[0].items():
            writer.writerow([intent, count])
        writer.writerow([])
        writer.writerow(["intents_per_session", "sessions"])
        for n, count in result[1].items():
            writer.writerow([n, count])
    else:
        raise ValueError(f"cannot export {type(result).__name__} as CSV")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# rendering

_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
            "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd",
            "#2f4b7c", "#a05195", "#f95d6a", "#ffa600")

_ROW_WIDTH = 800
_ROW_HEIGHT = 22
_ROW_GAP = 8
_LABEL_WIDTH = 120


def _colour_map(labels: list[str]) -> dict[str, str]:
    fixed = {"Persona": "#bbbbbb", "Target": "#777777", "Evaluation": "#dddd88"}
    out = dict(fixed)
    free = iter(_PALETTE)
    for label in sorted(set(labels)):
        if label not in out:
            out[label] = next(free, "#000000")
    return out


def render_pathways(segments_by_session: dict[str, list[PathwaySegment]]) -> str:
    """Deterministic SVG: one horizontal bar per session, widths = fractions."""
    sessions = list(segments_by_session)
    all_labels = [seg.label for segs in segments_by_session.values() for seg in segs]
    colours = _colour_map(all_labels)
    legend_labels = sorted(set(all_labels))
    height = len(sessions) * (_ROW_HEIGHT + _ROW_GAP) + 20 + 18 * len(legend_labels) + 10
    width = _LABEL_WIDTH + _ROW_WIDTH + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
    ]
    y = 10
    for sid in sessions:
        parts.append(f'<text x="4" y="{y + 15}">{sid}</text>')
        x = float(_LABEL_WIDTH)
        for seg in segments_by_session[sid]:
            w = seg.fraction * _ROW_WIDTH
            parts.append(
                f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{_ROW_HEIGHT}" '
                f'fill="{colours[seg.label]}"><title>{seg.label}: {seg.duration_ms} ms'
                f'</title></rect>')
            x += w
        y += _ROW_HEIGHT + _ROW_GAP
    y += 10
    for label in legend_labels:
        parts.append(f'<rect x="{_LABEL_WIDTH}" y="{y}" width="12" height="12" '
                     f'fill="{colours[label]}"/>')
        parts.append(f'<text x="{_LABEL_WIDTH + 18}" y="{y + 10}">{label}</text>')
        y += 18
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def figure_likert(diff: LikertDiff, out_path: str | Path) -> None:
    """Bar chart of per-level response differences (raster companion plot)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    items = list(diff.item_ids)
    levels = list(range(1, LIKERT_SCALE + 1))
    fig, axes = plt.subplots(1, len(items), figsize=(3 * len(items), 3), sharey=True)
    for ax, item in zip(axes, items):
        values = [diff.diff[item][level] for level in levels]
        colors = ["#4c72b0" if v >= 0 else "#dd8452" for v in values]
        ax.bar(levels, values, color=colors)
        ax.set_title(item)
        ax.set_xlabel("level")
        ax.axhline(0, color="black", linewidth=0.8)
    axes[0].set_ylabel("count B - count A")
    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)


def figure_pathways(segments_by_session: dict[str, list[PathwaySegment]],
                    out_path: str | Path) -> None:
    """Matplotlib rendering of the pathway bars (raster companion plot)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    sessions = list(segments_by_session)
    labels = sorted({seg.label for segs in segments_by_session.values() for seg in segs})
    colours = _colour_map(labels)
    fig, ax = plt.subplots(figsize=(10, 0.4 * max(len(sessions), 4) + 1.5))
    for row, sid in enumerate(sessions):
        x = 0.0
        for seg in segments_by_session[sid]:
            ax.barh(row, seg.fraction, left=x, color=colours[seg.label], height=0.7)
            x += seg.fraction
    ax.set_yticks(range(len(sessions)), sessions)
    ax.set_xlabel("fraction of interaction time")
    ax.set_xlim(0, 1)
    handles = [plt.Rectangle((0, 0), 1, 1, color=colours[l]) for l in labels]
    ax.legend(handles, labels, loc="upper left", bbox_to_anchor=(1.01, 1), fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
