"""Writes spreadsheet.json: 20 synthetic updates with per-token log-probabilities,
generations and the metric values computed here, independently of the Rust code.

    python3 make_spreadsheet.py > spreadsheet.json
"""
import json
import math
import random
from collections import Counter

rng = random.Random(20240607)
VOCAB = ["the", "a", "of", "city", "river", "is", "old", "new"]


def logprobs():
    return [round(-rng.uniform(0.01, 6.0), 6) for _ in range(rng.randint(1, 3))]


def prob(lps):
    return math.exp(sum(lps) / len(lps))


def entropy(text, n):
    toks = text.split()
    if len(toks) < n:
        return 0.0
    grams = Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))
    total = len(toks) - n + 1
    return -sum(c / total * math.log2(c / total) for c in grams.values())


def bleed(pairs):
    return -sum(min(prob(p["post"]) - prob(p["pre"]), 0.0) for p in pairs) / len(pairs)


def pair():
    p = {"pre": logprobs()}
    r = rng.random()
    if r < 0.3:
        p["post"] = list(p["pre"])
    elif r < 0.5:
        p["post"] = [min(0.0, round(x + rng.uniform(0, 1), 6)) for x in p["pre"]]
    else:
        p["post"] = logprobs()
    return p


def choice():
    c = {"new": logprobs(), "old": logprobs()}
    if rng.random() < 0.15:
        c["old"] = list(c["new"])
    return c


def generation():
    n = rng.choice([0, 1, 2, 3, 5, 12, 30, 60])
    return " ".join(rng.choice(VOCAB) for _ in range(n))


updates = []
for i in range(20):
    alts = [choice() for _ in range(rng.randint(1, 4))]
    u = {
        "update": choice(),
        "alts": alts,
        "knn": [pair() for _ in range(rng.randint(1, 10))],
        "random": [pair() for _ in range(rng.randint(0, 10))],
        "generations": [generation() for _ in alts],
        "seconds": round(rng.uniform(0.1, 3.0), 3),
    }
    up = u["update"]
    alt_pairs = [(prob(a["new"]), prob(a["old"])) for a in alts]
    u["expected"] = {
        "efficacy_diff": prob(up["new"]) - prob(up["old"]),
        "efficacy_success": 1.0 if prob(up["new"]) > prob(up["old"]) else 0.0,
        "gen_diff": sum(a - b for a, b in alt_pairs) / len(alt_pairs),
        "gen_success": sum(1.0 for a, b in alt_pairs if a > b) / len(alt_pairs),
        "bleedover_random": bleed(u["random"]) if u["random"] else 0.0,
        "bleedover_knn": bleed(u["knn"]),
        "fluency": sum(2 / 3 * entropy(g, 2) + 4 / 3 * entropy(g, 3) for g in u["generations"]) / len(alts),
    }
    updates.append(u)


def summary(values):
    n = len(values)
    mean = sum(values) / n
    sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
    return {"mean": mean, "half_width": 1.96 * sd / math.sqrt(n)}


columns = {
    "Efficacy-D": ("efficacy_diff", 100),
    "Efficacy-S": ("efficacy_success", 100),
    "Gen.-D": ("gen_diff", 100),
    "Gen.-S": ("gen_success", 100),
    "Bleedover-Random": ("bleedover_random", 100),
    "Bleedover-KNN": ("bleedover_knn", 100),
    "Fluency": ("fluency", 1),
}
aggregate = {name: summary([u["expected"][field] * scale for u in updates]) for name, (field, scale) in columns.items()}
aggregate["seconds/update"] = summary([u["seconds"] for u in updates])

print(json.dumps({"updates": updates, "aggregate": aggregate}, indent=1))
