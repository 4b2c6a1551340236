#!/usr/bin/env python3
"""Generate the trec_eval parity fixture under tests/fixtures/trec_parity/.

Writes a synthetic run + qrels and freezes reciprocal-rank values computed
by trec_eval itself (through the pytrec_eval bindings,
`pip install pytrec-eval-terrier`). The C++ suites compare `dense_eval eval`
against the frozen numbers, so trec_eval is only needed to regenerate.

    python3 scripts/make_trec_fixture.py [--out tests/fixtures/trec_parity]
"""

import argparse
import pathlib
import random

import pytrec_eval

DEPTH = 100


def six_sig(x: float) -> str:
    return "%#.6g" % x


def build(rng: random.Random):
    run = {}    # qid -> list of (docid, score_text) in generator order
    qrels = {}  # qid -> {docid: grade}
    for q in range(100):
        qid = str(1048554 + 37 * q)
        ndocs = rng.randint(40, 400)
        docs = rng.sample(range(10_000_000), ndocs)
        scores = []
        for i in range(ndocs):
            # Coarse values on some queries force exact score ties.
            if q % 4 == 0:
                s = rng.randint(0, 30) / 4.0
            else:
                s = rng.uniform(-5.0, 25.0)
            scores.append(six_sig(s))
        entries = list(zip((str(d) for d in docs), scores))
        run[qid] = entries

        judged = {}
        nrel = rng.choice([0, 1, 1, 1, 1, 2, 3])
        for d, _ in rng.sample(entries, nrel):
            judged[d] = rng.choice([1, 1, 2])
        # Lift most relevant docs toward the top so reciprocal ranks spread
        # over 1, 1/2, 1/3, ... rather than clustering near zero.
        for i, (d, _) in enumerate(entries):
            if judged.get(d, 0) >= 1 and rng.random() < 0.7:
                hi = rng.randint(24, 30) / 4.0 if q % 4 == 0 else rng.uniform(23.5, 26.0)
                entries[i] = (d, six_sig(hi))
        for d, _ in rng.sample(entries, rng.randint(0, 3)):
            judged.setdefault(d, 0)
        if rng.random() < 0.1:
            judged[str(20_000_000 + q)] = 1  # relevant but never retrieved
        if not judged:
            judged[str(30_000_000 + q)] = 0
        qrels[qid] = judged

    # Run-only queries (unjudged) and qrels-only queries.
    for q in range(5):
        qid = str(9_000_000 + q)
        run[qid] = [(str(rng.randrange(10_000_000)), six_sig(rng.uniform(0, 10)))
                    for _ in range(20)]
        run[qid] = list({d: s for d, s in run[qid]}.items())
    for q in range(3):
        qrels[str(8_000_000 + q)] = {str(rng.randrange(10_000_000)): 1}
    return run, qrels


def canonical(entries):
    # trec_eval order: score descending, then docno descending.
    return sorted(entries, key=lambda e: (float(e[1]), e[0]), reverse=True)


def recip_rank(qrels, run):
    ev = pytrec_eval.RelevanceEvaluator(qrels, {"recip_rank"})
    res = ev.evaluate(run)
    per_query = {q: v["recip_rank"] for q, v in res.items()}
    return per_query, sum(per_query.values()) / len(per_query)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/fixtures/trec_parity")
    ap.add_argument("--seed", type=int, default=20221015)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rng = random.Random(args.seed)
    run, qrels = build(rng)

    lines = []
    for qid, entries in run.items():
        # Stated ranks follow generator order, not score order; evaluators
        # must re-sort.
        for rank, (d, s) in enumerate(entries, start=1):
            lines.append(f"{qid} Q0 {d} {rank} {s} parity")
    rng.shuffle(lines)
    (out / "run.txt").write_text("\n".join(lines) + "\n")

    qlines = [f"{q} 0 {d} {g}" for q, docs in qrels.items() for d, g in docs.items()]
    (out / "qrels.txt").write_text("\n".join(qlines) + "\n")

    full_run = {q: {d: float(s) for d, s in e} for q, e in run.items()}
    cut_run = {q: {d: float(s) for d, s in canonical(e)[:DEPTH]} for q, e in run.items()}
    full_pq, full_mean = recip_rank(qrels, full_run)
    cut_pq, cut_mean = recip_rank(qrels, cut_run)

    with open(out / "expected.txt", "w") as f:
        f.write("# produced by trec_eval recip_rank via pytrec_eval\n")
        f.write(f"num_q {len(cut_pq)}\n")
        f.write(f"recip_rank_depth{DEPTH} {cut_mean:.17g}\n")
        f.write(f"recip_rank_full {full_mean:.17g}\n")
        for q in sorted(cut_pq):
            f.write(f"query {q} {cut_pq[q]:.17g} {full_pq[q]:.17g}\n")
    print(f"wrote {len(lines)} run lines, {len(qlines)} qrels lines; "
          f"recip_rank@{DEPTH}={cut_mean:.4f} full={full_mean:.4f}")


if __name__ == "__main__":
    main()
