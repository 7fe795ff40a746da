#!/usr/bin/env python3
"""Regenerates the synthetic corpora, replay scripts and reported-number
fixtures under tests/fixtures/. Deterministic: rerunning produces identical
files."""

import json
import pathlib
import random

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIX = ROOT / "tests" / "fixtures"


def write_json(path: pathlib.Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_text(path: pathlib.Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


class DocBuilder:
    """Accumulates sentences and remembers the span of each planted mention."""

    def __init__(self, sourcedb: str, sourceid: str):
        self.sourcedb = sourcedb
        self.sourceid = sourceid
        self.text = f"Synthetic record {sourceid}. "
        self.gold = []  # (begin, end, label)
        self.pred = []

    def plant(self, mention: str) -> tuple[int, int]:
        lead = "The report mentions "
        begin = len(self.text) + len(lead)
        self.text += f"{lead}{mention} at this point. "
        return begin, begin + len(mention)

    def doc_json(self, entities):
        return {
            "text": self.text,
            "sourcedb": self.sourcedb,
            "sourceid": self.sourceid,
            "denotations": [
                {"id": f"T{i + 1}", "span": {"begin": b, "end": e}, "obj": label}
                for i, (b, e, label) in enumerate(entities)
            ],
        }

    def write(self, base: pathlib.Path, with_pred: bool = False, pred_dir: str = "pred-iter-0"):
        write_json(base / "gold" / f"{self.sourceid}.json", self.doc_json(self.gold))
        if with_pred:
            write_json(base / pred_dir / f"{self.sourceid}.json", self.doc_json(self.pred))


# ---------------------------------------------------------------------------
# Evaluation-set corpora with pinned per-type totals


def make_eval_corpus(name: str, sourcedb: str, totals: dict[str, int], n_docs: int, seed: int):
    mentions = {
        "CompositeMention": "paired syndromic conditions",
        "DiseaseClass": "degenerative class disorder",
        "Modifier": "syndromic trait marker",
        "SpecificDisease": "crystalline fever syndrome",
        "Chemical": "synthetic compound agent",
        "Disease": "chronic sample disorder",
    }
    labels = []
    for label in sorted(totals):
        labels.extend([label] * totals[label])
    random.Random(seed).shuffle(labels)

    docs = [DocBuilder(sourcedb, f"eval-{i + 1:04d}") for i in range(n_docs)]
    for i, label in enumerate(labels):
        doc = docs[i % n_docs]
        span = doc.plant(f"{mentions[label]} {i + 1}")
        doc.gold.append((*span, label))
    base = FIX / name
    for doc in docs:
        doc.write(base)


# ---------------------------------------------------------------------------
# Iteration-0 discrepancy fixture (gold + predictions)


def make_iter0_matrix_fixture():
    base = FIX / "ncbi_dev_iter0"
    C, D, M, S = "CompositeMention", "DiseaseClass", "Modifier", "SpecificDisease"

    # (kind, gold label or None, predicted label or None, count)
    cases = [
        ("tp", D, D, 12),
        ("tp", M, M, 14),
        ("tp", S, S, 34),
        ("lm", D, C, 3),
        ("lm", D, M, 1),
        ("lm", M, C, 1),
        ("lm", S, D, 5),
        ("lm", S, M, 5),
        ("fn", D, None, 7),
        ("fn", M, None, 1),
        ("fn", S, None, 3),
        ("fp", None, D, 1),
        ("fp", None, S, 1),
    ]
    docs = [DocBuilder("ncbi-disease", f"dev-{i + 1:04d}") for i in range(10)]
    slot = 0
    for kind, gold_label, pred_label, count in cases:
        for _ in range(count):
            doc = docs[slot % len(docs)]
            span = doc.plant(f"condition sample {slot + 1}")
            if gold_label:
                doc.gold.append((*span, gold_label))
            if pred_label:
                doc.pred.append((*span, pred_label))
            slot += 1
    for doc in docs:
        doc.write(base, with_pred=True)


# ---------------------------------------------------------------------------
# Replay-loop fixtures


LOOP_SYSTEM_RULES = {
    "pattern": "Produce exactly one pattern insight",
    "principle": "Synthesize a single general principle in strict IF / THEN / EXCEPT form",
    "refine": "output the full updated guideline text",
}

GUIDELINE_V0 = """# Annotation Guidelines

## What to Annotate

### 1. Annotate disease mentions
Every mention of a disease in the record is annotated with the Disease label.

### 2. Annotate the minimum necessary span
Prefer the smallest contiguous span that names the condition.

## What NOT to Annotate

- General clinical vocabulary that names no specific condition.
- Section headers and boilerplate phrases.
"""

LOOP_RULE_NAMES = ["Rule Alpha", "Rule Beta", "Rule Gamma"]


def loop_guideline(version: int) -> str:
    text = GUIDELINE_V0
    for rule in LOOP_RULE_NAMES[:version]:
        marker = f"""### {rule}. Annotate mentions regardless of position

Disease mentions appearing anywhere in the record are annotated, including
trailing sentences and enumerations ({rule.lower().replace(' ', '-')}).

"""
        text = text.replace("## What NOT to Annotate", marker + "## What NOT to Annotate")
    return text


def stage_responses(round_idx: int, n_rounds_guideline: str) -> dict[str, str]:
    rule = LOOP_RULE_NAMES[round_idx]
    insight = (
        f"Pattern Name: Missed trailing disease mentions (round {round_idx})\n"
        "Confusion Trigger: Mentions placed late in the record are skipped when no "
        "explicit annotation cue precedes them.\n"
        "Contrastive Evidence: Verified true positives cluster near the start of the "
        "record where the reporting frame makes the mention salient.\n"
        f"Rule (Proposed): Annotate every disease mention regardless of its position; "
        f"see {rule.lower()}.\n"
    )
    principle = (
        "IF a noun phrase names a disease anywhere in the record, including trailing "
        "sentences and enumerations,\n"
        "THEN annotate that phrase with the Disease label using the minimum necessary "
        "span,\n"
        "EXCEPT when the phrase is general clinical vocabulary that names no specific "
        "condition.\n"
    )
    return {"pattern": insight, "principle": principle, "refine": n_rounds_guideline}


def make_loop_fixture(name: str, n_docs: int, gold_per_doc: int, tp_plan, fp_plan, rounds: int):
    """tp_plan/fp_plan: list per iteration of per-doc counts."""
    base = FIX / name
    docs = []
    gold_slots = []  # per doc: list of (begin, end)
    fp_slots = []
    for i in range(n_docs):
        doc = DocBuilder("loop-dev", f"dev-{i + 1:04d}")
        slots = [doc.plant(f"registered disorder {i + 1}-{k + 1}") for k in range(gold_per_doc)]
        spares = [doc.plant(f"spurious finding {i + 1}-{k + 1}") for k in range(8)]
        doc.gold = [(b, e, "Disease") for b, e in slots]
        docs.append(doc)
        gold_slots.append(slots)
        fp_slots.append(spares)
        doc.write(base)

    rules = []
    # moderation stages first: most recent guideline marker wins
    for round_idx in range(rounds - 1, -1, -1):
        responses = stage_responses(round_idx, loop_guideline(round_idx + 1))
        version_marker = [] if round_idx == 0 else [f"{LOOP_RULE_NAMES[round_idx - 1]}."]
        for stage in ("pattern", "principle", "refine"):
            rules.append(
                {
                    "match": [LOOP_SYSTEM_RULES[stage]] + version_marker,
                    "response": responses[stage],
                    "input_tokens": 1500 + 10 * round_idx,
                    "output_tokens": 400,
                    "latency_seconds": 2.0,
                }
            )
    # annotation responses, newest guideline first
    for it in range(len(tp_plan) - 1, -1, -1):
        version_marker = [] if it == 0 else [f"{LOOP_RULE_NAMES[it - 1]}."]
        for i in range(n_docs):
            entities = []
            for b, e in gold_slots[i][: tp_plan[it][i]]:
                entities.append(
                    {"begin": b, "end": e, "label": "Disease",
                     "span_text": docs[i].text[b:e]}
                )
            for b, e in fp_slots[i][: fp_plan[it][i]]:
                entities.append(
                    {"begin": b, "end": e, "label": "Disease",
                     "span_text": docs[i].text[b:e]}
                )
            payload = json.dumps({"annotations": entities})
            if i == 0:
                payload = f"Here are the annotations.\n```json\n{payload}\n```\n"
            rules.append(
                {
                    "match": [f"record dev-{i + 1:04d}."] + version_marker,
                    "response": payload,
                    "input_tokens": 900 + i,
                    "output_tokens": 150 + it,
                    "latency_seconds": 1.2,
                }
            )
    write_json(base / "script.json", {"rules": rules})
    write_text(base / "guideline_v0.md", GUIDELINE_V0)
    write_json(
        base / "schema.json",
        {"labels": [{"name": "Disease", "definition": "A named disorder or clinical condition."}]},
    )
    write_text(
        base / "prices.csv",
        "model_id,price_in,price_out,currency\nscripted-annotator-1,1.0,2.0,USD\n",
    )
    write_json(
        base / "config.json",
        {
            "dev_corpus": ".",
            "guideline": "guideline_v0.md",
            "schema": "schema.json",
            "templates": {
                "annotation": "../../../templates/annotation_prompt.txt",
                "pattern_explanation": "../../../templates/pattern_explanation.txt",
                "principle_generation": "../../../templates/principle_generation.txt",
                "guideline_refinement": "../../../templates/guideline_refinement.txt",
            },
            "archive": "archive",
            "model": {
                "family": "gpt",
                "model_id": "scripted-annotator-1",
                "reasoning_options": {"reasoning_effort": "high"},
            },
            "tau": 0.9,
            "max_iterations": 10,
            "parallelism": 2,
            "price_table": "prices.csv",
            "gateway": {
                "mode": "record",
                "provider": "scripted",
                "script": "script.json",
                "store": "store",
            },
        },
    )


def spread(total: int, n: int) -> list[int]:
    base = total // n
    extra = total % n
    return [base + (1 if i < extra else 0) for i in range(n)]


def make_loop_fixtures():
    tp_plan = [spread(46, 10), spread(73, 10), spread(76, 10), spread(74, 10)]
    fp_plan = [spread(54, 10), spread(27, 10), spread(24, 10), spread(26, 10)]
    make_loop_fixture("loop_nogain", 10, 10, tp_plan, fp_plan, rounds=3)

    # immediate-threshold session: predictions equal gold from the start
    make_loop_fixture("loop_immediate", 2, 5, [[5, 5]], [[0, 0]], rounds=0)


# ---------------------------------------------------------------------------
# Reported benchmark summaries (consistency-check inputs)


def make_reported():
    totals = {"ncbi_disease": 791, "bc5cdr": 2146, "biored": 3531}
    raw = {
        "ncbi_disease": {
            "gpt-5": [(0.45, 0.48, 0.46, 378), (0.78, 0.68, 0.73, 540), (0.82, 0.71, 0.76, 565)],
            "gemini-2.5-pro": [(0.36, 0.47, 0.40, 369), (0.69, 0.57, 0.63, 453), (0.72, 0.61, 0.66, 479)],
            "deepseek-reasoner": [(0.32, 0.30, 0.31, 236), (0.72, 0.45, 0.55, 356), (0.71, 0.47, 0.56, 369)],
        },
        "bc5cdr": {
            "gpt-5": [(0.84, 0.78, 0.80, 1664), (0.89, 0.81, 0.85, 1735), (0.92, 0.81, 0.86, 1737)],
            "gemini-2.5-pro": [(0.74, 0.63, 0.68, 1359), (0.84, 0.68, 0.76, 1469), (0.86, 0.70, 0.77, 1503)],
            "deepseek-reasoner": [(0.80, 0.45, 0.58, 968), (0.89, 0.50, 0.64, 1072), (0.86, 0.52, 0.65, 1119)],
        },
        "biored": {
            "gpt-5": [(0.75, 0.74, 0.74, 2598), (0.81, 0.72, 0.76, 2548), (0.82, 0.81, 0.82, 2871)],
            "gemini-2.5-pro": [(0.62, 0.60, 0.61, 2111), (0.74, 0.61, 0.67, 2137), (0.71, 0.69, 0.69, 2371)],
            "deepseek-reasoner": [(0.71, 0.33, 0.45, 1179), (0.77, 0.41, 0.53, 1442), (0.76, 0.42, 0.54, 1480)],
        },
    }
    rows = []
    for dataset in ("ncbi_disease", "bc5cdr", "biored"):
        for model, triples in raw[dataset].items():
            for mode, (p, r, f1, tp) in zip(("S", "G", "M"), triples):
                rows.append(
                    {
                        "dataset": dataset,
                        "model": model,
                        "mode": mode,
                        "precision": p,
                        "recall": r,
                        "f1": f1,
                        "tp": tp,
                        "total_entities": totals[dataset],
                    }
                )
    write_json(FIX / "reported" / "scores.json", {"rows": rows})

    cost_rows = [
        ("ncbi_disease", "gpt-5", 3, 1.186, 5.2, 3.557, 15.6),
        ("ncbi_disease", "gemini-2.5-pro", 5, 0.092, 3.0, 0.460, 14.8),
        ("ncbi_disease", "deepseek-reasoner", 2, 0.054, 15.8, 0.109, 31.6),
        ("bc5cdr", "gpt-5", 1, 1.729, 9.9, 1.729, 9.9),
        ("bc5cdr", "gemini-2.5-pro", 1, 0.099, 8.8, 0.099, 8.8),
        ("bc5cdr", "deepseek-reasoner", 1, 0.055, 15.4, 0.055, 15.4),
        ("biored", "gpt-5", 2, 1.991, 14.0, 3.982, 28.0),
        ("biored", "gemini-2.5-pro", 1, 0.251, 5.9, 0.251, 5.9),
        ("biored", "deepseek-reasoner", 1, 0.048, 29.8, 0.048, 29.8),
    ]
    write_json(
        FIX / "reported" / "costs.json",
        {
            "rows": [
                {
                    "dataset": ds,
                    "model": model,
                    "iterations": i,
                    "cost_final_iteration": c,
                    "minutes_final_iteration": t,
                    "cost_projected": cp,
                    "minutes_projected": tp,
                }
                for ds, model, i, c, t, cp, tp in cost_rows
            ]
        },
    )


def main():
    make_eval_corpus(
        "ncbi_eval_100",
        "ncbi-disease",
        {"CompositeMention": 37, "DiseaseClass": 127, "Modifier": 218, "SpecificDisease": 409},
        100,
        seed=11,
    )
    make_eval_corpus("bc5cdr_eval_100", "bc5cdr", {"Chemical": 1195, "Disease": 951}, 100, seed=13)
    make_iter0_matrix_fixture()
    make_loop_fixtures()
    make_reported()
    print("fixtures written to", FIX)


if __name__ == "__main__":
    main()
