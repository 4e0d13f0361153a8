#!/usr/bin/env python3
"""Reference values from numpy/scipy/statsmodels/scikit-learn, frozen into
tests/data/oracle. The C++ tests only read the files; rerun this script to
regenerate them."""
import csv
import json
from pathlib import Path

import numpy as np
import statsmodels.api as sm
from scipy import stats
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import average_precision_score, roc_auc_score

OUT = Path(__file__).resolve().parent.parent / "data" / "oracle"


def dump(name, obj):
    (OUT / name).write_text(json.dumps(obj, indent=1) + "\n")


def logit500():
    rng = np.random.default_rng(7)
    x = rng.normal(0.0, 1.0, 500)
    p = 1.0 / (1.0 + np.exp(-(-0.5 + 0.8 * x)))
    y = (rng.random(500) < p).astype(int)
    with open(OUT / "logit500.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "y"])
        for xi, yi in zip(x, y):
            w.writerow([repr(float(xi)), int(yi)])
    out = {}
    for name, xs in (("raw", x), ("standardized", (x - x.mean()) / x.std(ddof=1))):
        res = sm.Logit(y, sm.add_constant(xs)).fit(disp=0, tol=1e-14, maxiter=100)
        out[name] = {
            "intercept": float(res.params[0]), "coef": float(res.params[1]),
            "se_intercept": float(res.bse[0]), "se_coef": float(res.bse[1]),
            "z": float(res.tvalues[1]), "p_value": float(res.pvalues[1]),
            "nll": float(-res.llf),
        }
    dump("logit500_statsmodels.json", out)


def chi2_tables():
    rows = []
    for df in (1, 2, 3, 4, 5, 7, 10, 15, 20, 30):
        for p in (0.05, 0.01):
            rows.append({"df": df, "p": p, "x": float(stats.chi2.isf(p, df))})
    with open(OUT / "chi2_critical.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["df", "p", "x"])
        for r in rows:
            w.writerow([r["df"], r["p"], repr(r["x"])])
    tables = [
        [[15, 15], [15, 15]],
        [[10, 20], [20, 10]],
        [[12, 5], [7, 9], [3, 14]],
        [[40, 2], [35, 6], [20, 11], [5, 9]],
    ]
    out = []
    for t in tables:
        chi2, p, dof, expected = stats.chi2_contingency(np.array(t), correction=False)
        out.append({"table": t, "chi2": float(chi2), "p_value": float(p), "dof": int(dof),
                    "min_expected": float(expected.min())})
    dump("chi2_contingency.json", out)


def classifier():
    rng = np.random.default_rng(11)
    n, d = 200, 6
    X = rng.normal(0, 1, (n, d)) * (rng.random((n, d)) < 0.6)
    w_true = np.array([1.2, -0.7, 0.0, 0.4, 0.9, -1.5])
    y = (rng.random(n) < 1 / (1 + np.exp(-(0.3 + X @ w_true)))).astype(int)
    out = {"lambda": [], "X": X.tolist(), "y": y.tolist()}
    for lam in (1.0, 0.1):
        clf = LogisticRegression(C=1.0 / lam, tol=1e-12, max_iter=100000)
        clf.fit(X, y)
        out["lambda"].append({"l2_lambda": lam, "coef": clf.coef_[0].tolist(),
                              "intercept": float(clf.intercept_[0]),
                              "proba_first10": clf.predict_proba(X[:10])[:, 1].tolist()})
    dump("classifier200.json", out)


def tfidf():
    docs = [
        "Patient with CHF exacerbation, diuresed with lasix 40mg IV.",
        "CHF patient, discharged home; lasix continued.",
        "Afib with RVR, started on diltiazem. CHF stable.",
        "No acute events. Patient home with services, follow up in 2 weeks.",
        "Worsening renal function; lasix held, CHF team consulted.",
        "Patient ambulating, stable for discharge home.",
    ]
    vec = TfidfVectorizer(lowercase=True, token_pattern=r"[a-z0-9]{2,}", min_df=2, smooth_idf=True,
                          sublinear_tf=False, norm="l2")
    m = vec.fit_transform(docs)
    vocab = vec.get_feature_names_out().tolist()
    probe = "CHF CHF patient lasix home unknownword"
    pv = vec.transform([probe]).toarray()[0]
    dump("tfidf.json", {
        "docs": docs, "vocabulary": vocab, "idf": vec.idf_.tolist(),
        "matrix": m.toarray().tolist(), "probe": probe, "probe_vector": pv.tolist(),
    })


def metrics():
    rng = np.random.default_rng(3)
    cases = []
    for n in (8, 25, 60):
        s = np.round(rng.random(n), 2)  # rounding creates ties
        y = (rng.random(n) < 0.4).astype(int)
        y[0], y[1] = 0, 1
        cases.append({"scores": s.tolist(), "labels": y.tolist(),
                      "auroc": float(roc_auc_score(y, s)), "auprc": float(average_precision_score(y, s))})
    dump("metrics.json", cases)


def quartiles():
    rng = np.random.default_rng(5)
    cases = []
    for n in (1, 2, 3, 4, 5, 10, 17):
        v = np.round(rng.normal(70, 12, n), 1)
        q = np.percentile(v, [25, 50, 75], method="weibull")
        cases.append({"values": v.tolist(), "q1": float(q[0]), "median": float(q[1]), "q3": float(q[2])})
    dump("quartiles.json", cases)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    logit500()
    chi2_tables()
    classifier()
    tfidf()
    metrics()
    quartiles()


if __name__ == "__main__":
    main()
