"""Independent reference values for the C++ test suite.

Run once; the output files under tests/fixtures/ are checked in and the C++
tests compare against them. Nothing here imports or calls the C++ code.

    python3 tests/oracles/freeze.py
"""

import itertools
import json
import math
import pathlib
import re

import numpy as np
from scipy import stats

HERE = pathlib.Path(__file__).resolve().parent
FIXTURES = HERE.parent / "fixtures"


def time_embedding():
    out = []
    for dt, d in [(30.0, 8), (0.0, 6), (365.0, 16), (1.5, 4)]:
        vec = []
        for i in range(d // 2):
            angle = dt / 10000 ** (2 * i / d)
            vec += [math.sin(angle), math.cos(angle)]
        out.append({"delta": dt, "dim": d, "values": vec})
    return out


def variable_attention():
    rng = np.random.default_rng(20240501)
    cases = []
    for m, d in [(5, 4), (1, 3), (7, 6)]:
        e = rng.normal(size=(m, d))
        q = rng.normal(size=d)
        w = rng.normal(size=(d, d)) * 0.7
        scores = np.array([q @ np.tanh(w @ e[j]) for j in range(m)])
        ex = np.exp(scores - scores.max())
        alpha = ex / ex.sum()
        cases.append({
            "events": e.tolist(), "query": q.tolist(), "proj": w.tolist(),
            "weights": alpha.tolist(), "visit": (alpha @ e).tolist(),
        })
    return cases


def survival_values():
    rows = []
    for k, lam, s in [(1.0, 1.0, 0.0), (1.7, 220.0, 0.4), (0.6, 90.0, -1.2), (2.5, 400.0, 1.3)]:
        # proportional hazards on a Weibull baseline is a Weibull with scale lam * exp(-s / k)
        dist = stats.weibull_min(k, scale=lam * math.exp(-s / k))
        for t in [0.0, 1.0, 30.0, 90.0, 365.0]:
            rows.append({"shape": k, "scale": lam, "score": s, "t": t,
                         "survival": float(dist.sf(t)),
                         "hazard": float(dist.pdf(t) / dist.sf(t)) if t > 0 else None})
    return rows


def exponential_nll():
    # k = 1: event density rate*exp(-rate*t), censored mass exp(-rate*t), rate = exp(s)/lam
    rows = []
    for lam, s, t, observed in [(1.0, 0.0, 1.0, True), (150.0, 0.3, 42.0, True), (150.0, -0.8, 365.0, False),
                                (37.5, 1.1, 3.25, True), (500.0, 0.0, 12.0, False)]:
        rate = math.exp(s) / lam
        ll = (math.log(rate) if observed else 0.0) - rate * t
        rows.append({"scale": lam, "score": s, "t": t, "observed": observed, "nll": -ll})
    return rows


def shapley_case():
    rng = np.random.default_rng(7)
    n = 6
    x = rng.uniform(-1.0, 2.0, size=n)
    ref = rng.uniform(-0.5, 0.5, size=n)
    a = rng.normal(size=n)
    b = np.triu(rng.normal(size=(n, n)) * 0.4, 1)
    c = 0.8

    def f(z):
        return math.tanh(a @ z) + z @ b @ z + c * z[0] * z[1] * z[2] + 0.3 * math.sin(z[4] * z[5])

    def value(kept):
        z = np.where([i in kept for i in range(n)], x, ref)
        return f(z)

    phi = np.zeros(n)
    perms = list(itertools.permutations(range(n)))
    for perm in perms:
        kept = set()
        prev = value(kept)
        for g in perm:
            kept.add(g)
            cur = value(kept)
            phi[g] += cur - prev
            prev = cur
    phi /= len(perms)
    return {"x": x.tolist(), "reference": ref.tolist(), "linear": a.tolist(), "pairwise": b.tolist(),
            "triple": c, "phi": phi.tolist(), "f_x": value(set(range(n))), "f_ref": value(set())}


def ranking_metrics():
    rng = np.random.default_rng(11)
    cases = []
    for n in [12, 40, 97]:
        scores = np.round(rng.normal(size=n), 1)  # rounding creates ties
        times = np.round(rng.exponential(100.0, size=n)) + 1.0
        observed = rng.uniform(size=n) < 0.6
        labels = (observed & (times <= 90.0)).astype(int)
        keep = ~((~observed) & (times <= 90.0))
        s_k, l_k = scores[keep], labels[keep]
        pos, neg = s_k[l_k == 1], s_k[l_k == 0]
        auc = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg) / (len(pos) * len(neg))
        num = den = 0.0
        for i in range(n):
            if not observed[i]:
                continue
            for j in range(n):
                if times[i] < times[j]:
                    den += 1
                    num += 1.0 if scores[i] > scores[j] else 0.5 if scores[i] == scores[j] else 0.0
        cases.append({"scores": scores.tolist(), "times": times.tolist(), "observed": observed.astype(int).tolist(),
                      "auc_scores": s_k.tolist(), "auc_labels": l_k.tolist(), "auc": auc,
                      "concordance": num / den})
    return cases


WORDS = ("heart rhythm fatigue chest pain pressure breath shortness swelling ankles dizziness fainting "
         "palpitations racing irregular oxygen saturation nausea vomiting fever infection anthracycline "
         "trastuzumab radiation echocardiogram ejection fraction troponin biomarker rest exercise sleep "
         "hydration medication dose schedule report call team clinic urgent emergency monitor daily "
         "weight gain blood pressure cough night lying flat stairs walking").split()


STOP = set("""a an and are as at be been but by can could did do does for from had has have i if in into is it its me my no not of on or our so than that the their them then there these they this to was we were what when which while who will with would you your""".split())


def tokenize(text):
    out = []
    for raw in re.findall(r"[A-Za-z0-9']+", text):
        tok = raw.lower()
        tok = tok.lstrip("'").rstrip("'")
        if tok:
            out.append(tok)
    return out


def retrieval():
    rng = np.random.default_rng(3)
    snippets = []
    for i in range(50):
        n = int(rng.integers(6, 16))
        words = [WORDS[int(j)] for j in rng.integers(0, len(WORDS), size=n)]
        text = " ".join(words).capitalize() + "."
        snippets.append({"snippet_id": f"S{i:03d}", "source": "synthetic", "text": text, "tags": []})
    # two identical snippets to exercise the tie rule
    snippets.append({"snippet_id": "S051", "source": "synthetic", "text": "Ankle swelling and weight gain.", "tags": []})
    snippets.append({"snippet_id": "S050", "source": "synthetic", "text": "Ankle swelling and weight gain.", "tags": []})

    def terms(text):
        return [t for t in tokenize(text) if t not in STOP]

    docs = [terms(s["text"]) for s in snippets]
    n_docs = len(docs)
    vocab = sorted({t for d in docs for t in d})
    df = {t: sum(1 for d in docs if t in d) for t in vocab}
    idf = {t: math.log((1 + n_docs) / (1 + df[t])) + 1 for t in vocab}

    def vec(tokens):
        v = {}
        for t in tokens:
            if t in idf:
                v[t] = v.get(t, 0.0) + 1.0
        return {t: c * idf[t] for t, c in v.items()}

    def cosine(a, b):
        na = math.sqrt(sum(w * w for w in a.values()))
        nb = math.sqrt(sum(w * w for w in b.values()))
        if na == 0 or nb == 0:
            return 0.0
        return sum(w * b.get(t, 0.0) for t, w in a.items()) / (na * nb)

    queries = ["chest pain at night", "racing heart and dizziness", "shortness of breath when lying flat",
               "ankle swelling weight gain", "missed medication dose", "oxygen saturation low",
               "call the clinic team", "troponin biomarker echocardiogram", "fever infection cough",
               "exercise stairs walking fatigue"]
    results = []
    for q in queries:
        qv = vec(terms(q))
        scored = [(cosine(qv, vec(d)), s["snippet_id"]) for d, s in zip(docs, snippets)]
        scored = [x for x in scored if x[0] > 0]
        scored.sort(key=lambda x: (-x[0], x[1]))
        results.append({"query": q, "top": [{"snippet_id": sid, "score": sc} for sc, sid in scored[:3]]})
    return snippets, results


def two_pass_moments():
    rng = np.random.default_rng(99)
    xs = 80.0 + 6.0 * rng.standard_normal(10000)
    return {"samples": xs.tolist(), "mean": float(xs.mean()), "variance": float(xs.var(ddof=1))}


def main():
    snippets, retrieval_results = retrieval()
    with open(FIXTURES / "corpus50.ndjson", "w") as fh:
        for s in snippets:
            fh.write(json.dumps(s) + "\n")
    frozen = {
        "time_embedding": time_embedding(),
        "variable_attention": variable_attention(),
        "survival": survival_values(),
        "exponential_nll": exponential_nll(),
        "shapley": shapley_case(),
        "ranking": ranking_metrics(),
        "retrieval": retrieval_results,
        "moments": two_pass_moments(),
    }
    with open(FIXTURES / "frozen.json", "w") as fh:
        json.dump(frozen, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main()
