"""Procedural context: guideline retrieval and structuring, hand-motion
textualization, and the completed-step progress record.

Retrieval is plain tf-idf cosine over lowercase word tokens. It is run once
per session against a small expert-written corpus, so exact, hand-checkable
scoring matters more than throughput.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .httpchat import chat_complete
from .jsontext import extract_first_json
from .motion import FlowSummary

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# compass sectors, 45 degrees apiece, centered on the axes; y grows downward
DIRECTIONS = (
    "right",
    "down-right",
    "down",
    "down-left",
    "left",
    "up-left",
    "up",
    "up-right",
)
STATIONARY = "stationary"


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class GuidelineCorpus:
    """Expert task guidelines keyed by document id (file stem on disk)."""

    documents: dict[str, str]

    @classmethod
    def load(cls, directory: str | Path) -> "GuidelineCorpus":
        root = Path(directory)
        if not root.is_dir():
            raise FileNotFoundError(f"guideline corpus directory {root} does not exist")
        docs = {
            p.stem: p.read_text(encoding="utf-8") for p in sorted(root.glob("*.txt"))
        }
        return cls(documents=docs)


@dataclass(frozen=True)
class RetrievalResult:
    doc_id: str
    text: str
    similarity: float
    low_confidence: bool


def retrieve_guideline(instruction: str, corpus: GuidelineCorpus) -> RetrievalResult:
    """Pick the guideline whose tf-idf vector is most similar to the instruction.

    Cosine similarity over raw term counts weighted by idf = ln(N / df).
    Ties break toward the smallest doc id; if every similarity is zero the
    lowest-id document is returned flagged low-confidence rather than failing
    the session.
    """
    if not corpus.documents:
        raise ValueError("guideline corpus is empty")
    query_tf = Counter(tokenize(instruction))
    if not query_tf:
        raise ValueError("instruction has no usable tokens")

    doc_ids = sorted(corpus.documents)
    doc_tfs = {d: Counter(tokenize(corpus.documents[d])) for d in doc_ids}
    n_docs = len(doc_ids)
    df = Counter()
    for tf in doc_tfs.values():
        df.update(set(tf))
    idf = {term: math.log(n_docs / df[term]) for term in df}

    def weight(tf: Counter) -> dict[str, float]:
        return {t: c * idf[t] for t, c in tf.items() if t in idf}

    q_vec = weight(query_tf)
    q_norm = math.sqrt(sum(v * v for v in q_vec.values()))

    best_id = doc_ids[0]
    best_sim = 0.0
    for doc_id in doc_ids:
        d_vec = weight(doc_tfs[doc_id])
        d_norm = math.sqrt(sum(v * v for v in d_vec.values()))
        if q_norm == 0.0 or d_norm == 0.0:
            sim = 0.0
        else:
            dot = sum(v * d_vec[t] for t, v in q_vec.items() if t in d_vec)
            sim = dot / (q_norm * d_norm)
        if sim > best_sim:
            best_id, best_sim = doc_id, sim
    return RetrievalResult(
        doc_id=best_id,
        text=corpus.documents[best_id],
        similarity=best_sim,
        low_confidence=best_sim == 0.0,
    )


@dataclass(frozen=True)
class GuidelineStep:
    id: int
    title: str
    details: str = ""
    prerequisites: tuple[int, ...] = ()


@dataclass(frozen=True)
class StructuredGuideline:
    task: str
    steps: tuple[GuidelineStep, ...]

    def step_titles(self) -> list[str]:
        return [s.title for s in self.steps]

    def render(self) -> str:
        """Compact text block for the prompt's guideline slot."""
        lines = [f"Task: {self.task}", "Steps:"]
        for s in self.steps:
            line = f"{s.id}. {s.title}"
            if s.prerequisites:
                line += f" [after {', '.join(str(p) for p in s.prerequisites)}]"
            if s.details:
                line += f" :: {s.details}"
            lines.append(line)
        return "\n".join(lines)


class GuidelineFormatError(ValueError):
    """A structured guideline violates the step-graph contract."""


def validate_guideline(guideline: StructuredGuideline) -> StructuredGuideline:
    """Enforce the structural contract; returns the guideline for chaining.

    Step ids must be contiguous from 1, titles nonempty, prerequisites must
    reference existing steps, and the prerequisite graph must be acyclic.
    """
    if not guideline.task.strip():
        raise GuidelineFormatError("guideline task label is empty")
    if not guideline.steps:
        raise GuidelineFormatError("guideline has no steps")
    ids = [s.id for s in guideline.steps]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        raise GuidelineFormatError(
            f"step ids must be contiguous from 1, got {sorted(ids)}"
        )
    by_id = {s.id: s for s in guideline.steps}
    for s in guideline.steps:
        if not s.title.strip():
            raise GuidelineFormatError(f"step {s.id} has an empty title")
        for p in s.prerequisites:
            if p not in by_id:
                raise GuidelineFormatError(
                    f"step {s.id} requires unknown step {p}"
                )

    # DFS cycle check over prerequisite edges
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {i: WHITE for i in by_id}

    def visit(i: int) -> None:
        color[i] = GRAY
        for p in by_id[i].prerequisites:
            if color[p] == GRAY:
                raise GuidelineFormatError(
                    f"prerequisites are cyclic through step {p}"
                )
            if color[p] == WHITE:
                visit(p)
        color[i] = BLACK

    for i in by_id:
        if color[i] == WHITE:
            visit(i)
    return guideline


_STEP_LINE_RE = re.compile(r"^\s*(\d+)\.\s*(.+?)\s*$")
_PREREQ_RE = re.compile(r"\[after([^\]]*)\]")


class ScriptedStructurer:
    """Parses the fixture markup convention into a structured guideline.

    Convention: an optional ``Task: <label>`` line, then numbered step lines

        3. Pour water [after 1, 2] :: Fill the mug to the brim.

    where the ``[after ...]`` prerequisite list and the ``::`` details suffix
    are both optional. Unnumbered prose lines are ignored.
    """

    def structure(self, raw: str) -> StructuredGuideline:
        task = ""
        steps: list[GuidelineStep] = []
        for line in raw.splitlines():
            stripped = line.strip()
            if stripped.lower().startswith("task:") and not task:
                task = stripped[5:].strip()
                continue
            m = _STEP_LINE_RE.match(line)
            if not m:
                continue
            step_id = int(m.group(1))
            rest = m.group(2)
            details = ""
            if "::" in rest:
                rest, details = (part.strip() for part in rest.split("::", 1))
            prereqs: tuple[int, ...] = ()
            pm = _PREREQ_RE.search(rest)
            if pm:
                body = pm.group(1).strip().lstrip(":").strip()
                prereqs = tuple(
                    int(tok) for tok in re.split(r"[,\s]+", body) if tok
                )
                rest = _PREREQ_RE.sub("", rest).strip()
            steps.append(
                GuidelineStep(
                    id=step_id, title=rest, details=details, prerequisites=prereqs
                )
            )
        if not task:
            task = "Untitled task"
        return validate_guideline(StructuredGuideline(task=task, steps=tuple(steps)))


_STRUCTURER_SYSTEM = (
    "You convert a free-form task guideline into JSON with the shape "
    '{"task": str, "steps": [{"id": int, "title": str, "details": str, '
    '"prerequisites": [int, ...]}]}. Step ids must count up from 1 in order. '
    "Reply with the JSON object only."
)
_STRUCTURER_EXAMPLE_IN = (
    "Task: Make toast\n"
    "Start by slicing the bread, then toast it, and butter it last."
)
_STRUCTURER_EXAMPLE_OUT = (
    '{"task": "Make toast", "steps": ['
    '{"id": 1, "title": "Slice the bread", "details": "", "prerequisites": []}, '
    '{"id": 2, "title": "Toast the slice", "details": "", "prerequisites": [1]}, '
    '{"id": 3, "title": "Butter the toast", "details": "", "prerequisites": [2]}]}'
)


class RemoteStructurer:
    """One-shot guideline structuring through a chat-completion endpoint."""

    def __init__(self, endpoint: str, model: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout

    def structure(self, raw: str) -> StructuredGuideline:
        messages = [
            {"role": "system", "content": _STRUCTURER_SYSTEM},
            {"role": "user", "content": _STRUCTURER_EXAMPLE_IN},
            {"role": "assistant", "content": _STRUCTURER_EXAMPLE_OUT},
            {"role": "user", "content": raw},
        ]
        reply = chat_complete(
            self.endpoint, messages, model=self.model, timeout=self.timeout
        )
        try:
            obj = extract_first_json(reply)
        except ValueError as exc:
            raise GuidelineFormatError(f"structurer reply held no JSON: {exc}") from exc
        try:
            steps = tuple(
                GuidelineStep(
                    id=int(s["id"]),
                    title=str(s["title"]),
                    details=str(s.get("details", "")),
                    prerequisites=tuple(int(p) for p in s.get("prerequisites", [])),
                )
                for s in obj["steps"]
            )
            guideline = StructuredGuideline(task=str(obj["task"]), steps=steps)
        except (KeyError, TypeError, ValueError) as exc:
            raise GuidelineFormatError(f"structurer reply malformed: {exc}") from exc
        return validate_guideline(guideline)


def structure_guideline(raw: str, structurer) -> StructuredGuideline:
    """Run a structurer over raw guideline text (one-time, before a session)."""
    return structurer.structure(raw)


def direction_name(dx: float, dy: float, stationary_threshold: float) -> str:
    """Eight-way compass name for an image-plane motion vector.

    Sectors are 45 degrees wide and centered on the compass axes; a vector on
    a sector boundary (22.5 + k*45 degrees) belongs to the lower-angle bin.
    Vectors shorter than stationary_threshold read as stationary.
    """
    if math.hypot(dx, dy) < stationary_threshold:
        return STATIONARY
    angle = math.degrees(math.atan2(dy, dx)) % 360.0
    sector = math.ceil((angle - 22.5) / 45.0 - 1e-9) % 8
    return DIRECTIONS[sector]


@dataclass(frozen=True)
class MotionEntry:
    side: str
    direction: str
    magnitude: float


@dataclass(frozen=True)
class HandMotionCue:
    entries: tuple[MotionEntry, ...]
    rendered: str


def _clause(noun: str, direction: str) -> str:
    if direction == STATIONARY:
        return f"the {noun} remains almost stationary"
    return f"the {noun} is moving {direction}"


def textualize_motion(
    hand_flows: dict[str, FlowSummary],
    stationary_threshold: float = 1.0,
    scene_flow: FlowSummary | None = None,
) -> HandMotionCue:
    """Render per-hand flow into the prompt's motion-cue sentence.

    Every detected hand is mentioned exactly once, in the order given (the
    detector orders left to right). Without hands, the full-frame flow is
    described as camera motion.
    """
    entries: list[MotionEntry] = []
    clauses: list[str] = []
    for side, flow in hand_flows.items():
        direction = direction_name(flow.dx, flow.dy, stationary_threshold)
        entries.append(MotionEntry(side=side, direction=direction, magnitude=flow.magnitude))
        noun = f"{side} hand" if side in ("left", "right") else "hand"
        clauses.append(_clause(noun, direction))
    if not clauses and scene_flow is not None:
        direction = direction_name(scene_flow.dx, scene_flow.dy, stationary_threshold)
        entries.append(
            MotionEntry(side="scene", direction=direction, magnitude=scene_flow.magnitude)
        )
        clauses.append(_clause("camera view", direction))
    if not clauses:
        rendered = "No hand or scene motion information is available."
    else:
        rendered = ", ".join(clauses) + "."
        rendered = rendered[0].upper() + rendered[1:]
    return HandMotionCue(entries=tuple(entries), rendered=rendered)


@dataclass(frozen=True)
class ProgressRecord:
    """Ordered, duplicate-free list of completed step titles."""

    completed: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(set(self.completed)) != len(self.completed):
            raise ValueError(f"progress record repeats a step: {self.completed}")

    def add(self, step: str) -> "ProgressRecord":
        """Record a completed step; revisits are not re-appended."""
        if step in self.completed:
            return self
        return ProgressRecord(self.completed + (step,))

    def render(self) -> str:
        return render_progress(self)


def render_progress(record: ProgressRecord) -> str:
    """Bracketed, comma-joined history line for the prompt ("[]" when empty)."""
    return "[" + ", ".join(record.completed) + "]"
