"""Zero-shot question-type classification with subsampled majority voting.

A pluggable backend answers "which type is this question?" prompts; a
keyword rule backend keeps the pipeline runnable offline, and any
external model can be wired in as a child process. Per puzzle we query a
random subsample of instances and keep the most frequent parsed type.
"""

from __future__ import annotations

import subprocess
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .core import DEFAULT_TYPES, PuzzleInstance, validate_type_list
from .rng import Rng

PROMPT_FORMAT = (
    "There are eight question types: [{types}]. "
    "So, {question} which type does this question belong to?"
)

#: sentinel for a backend response naming no known type
UNPARSEABLE = None


def build_type_prompt(question: str, type_list=DEFAULT_TYPES) -> str:
    """Fill the classification prompt with a question, verbatim."""
    if not question:
        raise ValueError("question must be nonempty")
    types = validate_type_list(type_list)
    return PROMPT_FORMAT.format(types=", ".join(types), question=question)


def parse_type_response(raw: str, type_list=DEFAULT_TYPES) -> str | None:
    """Map a raw backend response to a type name, or None when unparseable.

    Scan is case-insensitive substring matching in type-list order, so an
    answer naming several types resolves to the earliest-listed one.
    """
    lowered = raw.lower()
    for name in validate_type_list(type_list):
        if name in lowered:
            return name
    return UNPARSEABLE


def sample_instances(instances: list, k: int, rng: Rng) -> list:
    """Uniform sample of min(k, len(instances)) items without replacement.

    Partial Fisher-Yates on a copy; output order is the draw order, fixed
    by the rng seed.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not instances:
        raise ValueError("cannot sample from an empty instance list")
    pool = list(instances)
    n = len(pool)
    k = min(k, n)
    for i in range(k):
        j = i + rng.next_below(n - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


@dataclass
class VoteTally:
    """Vote counts per type plus the number of unparseable responses."""

    counts: Counter = field(default_factory=Counter)
    unparseable: int = 0

    def add(self, parsed: str | None) -> None:
        if parsed is UNPARSEABLE:
            self.unparseable += 1
        else:
            self.counts[parsed] += 1

    @property
    def total(self) -> int:
        return sum(self.counts.values()) + self.unparseable

    def to_json(self) -> dict:
        return {"tally": dict(sorted(self.counts.items())), "unparseable": self.unparseable}


def majority_vote(tally: VoteTally, type_list=DEFAULT_TYPES) -> str:
    """Most-voted type; ties break toward the earlier position in type_list."""
    types = validate_type_list(type_list)
    if not tally.counts:
        raise ValueError("no parsed votes to aggregate")
    return max(types, key=lambda t: (tally.counts.get(t, 0), -types.index(t)))


def rule_backend(prompt: str) -> str:
    """Deterministic offline stand-in for a chat model.

    The framing sentences are stripped before matching so the type names
    listed in the prompt itself never trigger a rule. First keyword hit in
    a fixed rule order wins; "logic" is the default.
    """
    rules = [
        (("how many", "count the", "number of"), "counting"),
        (("sum", "total", "add up", "subtract", "minus", "plus"), "arithmetic"),
        (("solve for", "equation", "unknown", "value of x"), "algebra"),
        (("order", "middle", "left of", "right of", "above", "below", "rotate"), "spatial reasoning"),
        (("longer", "shorter", "heavier", "lighter", "taller", "weigh", "length"), "measuring"),
        (("path", "route", "maze", "reach the"), "path finding"),
    ]
    lowered = prompt.lower()
    _, sep, rest = lowered.partition("]. so, ")
    if sep:
        lowered = rest
    lowered = lowered.removesuffix(" which type does this question belong to?")
    for keywords, name in rules:
        if any(kw in lowered for kw in keywords):
            return name
    return "logic"


class ExecBackend:
    """External model runner: one prompt on stdin, one response on stdout.

    A nonzero exit code, a timeout, or an undecodable reply all count as
    an unparseable vote upstream rather than aborting the run.
    """

    def __init__(self, argv: list[str], timeout: float = 60.0):
        if not argv:
            raise ValueError("exec backend needs a command")
        self.argv = list(argv)
        self.timeout = timeout

    def __call__(self, prompt: str) -> str:
        result = subprocess.run(
            self.argv,
            input=prompt.encode("utf-8"),
            capture_output=True,
            timeout=self.timeout,
        )
        if result.returncode != 0:
            raise RuntimeError(f"backend exited with code {result.returncode}")
        return result.stdout.decode("utf-8")


def classify_puzzle(
    backend,
    instances: list[PuzzleInstance],
    k: int,
    rng: Rng,
    type_list=DEFAULT_TYPES,
    jobs: int = 1,
) -> tuple[str, VoteTally]:
    """Classify one puzzle: sample k instances, query, parse, majority-vote.

    Backend exceptions on individual queries degrade to unparseable votes.
    Returns the winning type and the full tally for audit.
    """
    chosen = sample_instances(instances, k, rng)
    prompts = [build_type_prompt(inst.question, type_list) for inst in chosen]

    def ask(prompt: str) -> str | None:
        try:
            return parse_type_response(backend(prompt), type_list)
        except Exception:
            return UNPARSEABLE

    tally = VoteTally()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parsed = list(pool.map(ask, prompts))
    else:
        parsed = [ask(p) for p in prompts]
    for vote in parsed:
        tally.add(vote)
    return majority_vote(tally, type_list), tally
