"""
Question-type classification by majority vote
=============================================

Shows the zero-shot typing prompt, a backend answering it, and the
per-puzzle vote aggregation with its deterministic tie break.
"""

from puzzlekit.core import DEFAULT_TYPES, PuzzleInstance
from puzzlekit.qtype import (VoteTally, build_type_prompt, classify_puzzle,
                             majority_vote, parse_type_response, rule_backend)
from puzzlekit.rng import Rng

# Each sampled instance becomes one prompt. The type list is spliced
# into the prompt verbatim, so custom taxonomies are one argument away.
question = "How many triangles are hidden in this figure?"
prompt = build_type_prompt(question)
print(prompt)

# A backend maps prompt -> free-form text. The built-in rule backend is
# a keyword table: cheap, deterministic, good enough to exercise the
# voting machinery end to end.
response = rule_backend(prompt)
print("backend says:", repr(response))
print("parsed:", parse_type_response(response))

# Responses that mention no known type parse to None and only bump the
# unparseable counter; they never invent a vote.
print("garbage parses to:", parse_type_response("blue, mostly?"))

# A puzzle is typed by sampling k of its instances and voting. Ties go
# to whichever type is listed earlier, so results never depend on hash
# order or arrival order.
tie = VoteTally()
for vote in ["arithmetic", "logic"] * 50:
    tie.add(vote)
print("100 votes split 50/50:", dict(tie.counts))
print("winner:", majority_vote(tie, DEFAULT_TYPES))

# End to end: 30 instances of one puzzle, 10 sampled votes.
instances = [
    PuzzleInstance(3, i, f"p3_{i}.png",
                   "What is the total of the three dice?"
                   if i % 4 else "A riddle with no keywords at all.",
                   ("3", "7", "9", "12", "18"))
    for i in range(30)
]
qtype, tally = classify_puzzle(rule_backend, instances, k=10, rng=Rng(99))
print(f"\npuzzle 3 -> {qtype} (tally {dict(tally.counts)}, "
      f"{tally.unparseable} unparseable)")
