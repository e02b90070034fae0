#!/usr/bin/env python3
"""Cross-check the Rust OPTICS/xi clustering and Friedman statistics against
scikit-learn and scipy.

Usage:
    cargo run -p lux --example reference_dump --release -- /tmp/refdump
    python3 scripts/check_against_references.py /tmp/refdump

Requires scikit-learn and scipy. Exits nonzero on any mismatch.
"""
import json
import sys

import numpy as np
from scipy import stats
from sklearn.cluster import OPTICS


def check_optics(path):
    ok = {"ordering": 0, "reachability": 0, "labels": 0}
    bad = []
    total = 0
    for line in open(path):
        rec = json.loads(line)
        total += 1
        X = np.array(rec["points"])
        ms = rec["min_samples"]
        o = OPTICS(min_samples=ms, max_eps=np.inf, cluster_method="xi", xi=0.05).fit(X)
        m_ord = list(map(int, o.ordering_)) == rec["ordering"]
        sk_reach = np.where(np.isfinite(o.reachability_), o.reachability_, -1.0)
        m_reach = bool(np.allclose(sk_reach, np.array(rec["reachability"]), atol=1e-9))
        m_lab = list(map(int, o.labels_)) == rec["labels"]
        ok["ordering"] += m_ord
        ok["reachability"] += m_reach
        ok["labels"] += m_lab
        if not (m_ord and m_reach and m_lab):
            bad.append((rec["case"], m_ord, m_reach, m_lab))
    print(f"optics: {total} cases, matches {ok}")
    if bad:
        print("  divergent (case, ordering, reachability, labels):", bad[:10])
    return not bad


def check_friedman(path):
    bad = 0
    total = 0
    skipped = 0
    for line in open(path):
        rec = json.loads(line)
        table = np.array(rec["table"])
        n, k = table.shape
        if k < 3:  # scipy needs at least 3 treatments
            skipped += 1
            continue
        total += 1
        chi2, _ = stats.friedmanchisquare(*[table[:, j] for j in range(k)])
        f = (n - 1) * chi2 / (n * (k - 1) - chi2)
        crit = stats.f.ppf(0.95, k - 1, (k - 1) * (n - 1))
        p_f = 1 - stats.f.cdf(f, k - 1, (k - 1) * (n - 1))
        ranks = stats.rankdata(-table, axis=1).mean(axis=0)
        if not (
            abs(chi2 - rec["chi2"]) < 1e-9
            and abs(f - rec["f"]) < 1e-9
            and abs(crit - rec["critical"]) < 1e-7
            and abs(p_f - rec["p"]) < 1e-9
            and np.allclose(ranks, rec["ranks"], atol=1e-12)
        ):
            bad += 1
            print(f"  case {rec['case']} (n={n},k={k}): chi2 {chi2} vs {rec['chi2']}")
    print(f"friedman: {total} tables compared ({skipped} skipped with k=2), {bad} mismatches")
    return bad == 0


def main():
    dump = sys.argv[1] if len(sys.argv) > 1 else "/tmp/refdump"
    good = check_optics(f"{dump}/optics.jsonl")
    good &= check_friedman(f"{dump}/friedman.jsonl")
    sys.exit(0 if good else 1)


if __name__ == "__main__":
    main()
