#!/usr/bin/env python3
"""Independent reference computation for the frozen metric table.

Implements corpus BLEU (closest-reference brevity penalty, no smoothing),
ROUGE-L (max LCS F_beta over references, beta=1.2, averaged over images)
and CIDEr-D (tf-idf n-gram cosine with clipping and a gaussian length
penalty, n=4, sigma=6, x10) directly from their definitions. Run it to
regenerate the expected values asserted in test_metrics.cpp and the
acceptance suite.
"""

import math
from collections import Counter

CORPUS = [
    ("a dog runs in the park",
     ["a dog runs in the park"]),
    ("a cat sits on the mat",
     ["a cat sits on a mat", "the cat is sitting on the mat"]),
    ("two birds fly over water",
     ["birds fly over the water", "two birds soar above the lake"]),
    ("the man rides a red bike",
     ["a man rides a bicycle", "the man is riding a red bike down the road"]),
    ("children play with a blue ball",
     ["kids play ball in the yard", "the children are playing with a ball"]),
]


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(corpus, max_n=4):
    match = [0] * max_n
    total = [0] * max_n
    cand_len = 0
    ref_len = 0
    for cand, refs in corpus:
        c = cand.split()
        rs = [r.split() for r in refs]
        cand_len += len(c)
        # closest reference length, ties -> shorter
        ref_len += min((abs(len(r) - len(c)), len(r)) for r in rs)[1]
        for n in range(1, max_n + 1):
            cn = ngrams(c, n)
            maxref = Counter()
            for r in rs:
                rn = ngrams(r, n)
                for g, k in rn.items():
                    maxref[g] = max(maxref[g], k)
            match[n - 1] += sum(min(k, maxref[g]) for g, k in cn.items())
            total[n - 1] += max(0, len(c) - n + 1)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    out = []
    for n in range(1, max_n + 1):
        ps = []
        for i in range(n):
            ps.append(0.0 if total[i] == 0 else match[i] / total[i])
        if any(p == 0.0 for p in ps):
            out.append(0.0)
        else:
            out.append(bp * math.exp(sum(math.log(p) for p in ps) / n))
    return out


def lcs(a, b):
    dp = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                dp[i][j] = dp[i - 1][j - 1] + 1
            else:
                dp[i][j] = max(dp[i - 1][j], dp[i][j - 1])
    return dp[len(a)][len(b)]


def rouge_l(corpus, beta=1.2):
    scores = []
    for cand, refs in corpus:
        c = cand.split()
        best = 0.0
        for ref in refs:
            r = ref.split()
            l = lcs(c, r)
            if l == 0:
                continue
            p = l / len(c)
            q = l / len(r)
            f = (1 + beta * beta) * p * q / (q + beta * beta * p)
            best = max(best, f)
        scores.append(best)
    return sum(scores) / len(scores)


def cider_d(corpus, max_n=4, sigma=6.0):
    n_images = len(corpus)
    doc_freq = Counter()
    for _, refs in corpus:
        seen = set()
        for ref in refs:
            toks = ref.split()
            for n in range(1, max_n + 1):
                seen.update(ngrams(toks, n).keys())
        for g in seen:
            doc_freq[g] += 1
    log_n = math.log(n_images)

    def vecs(tokens):
        out = []
        norms = []
        for n in range(1, max_n + 1):
            cnt = ngrams(tokens, n)
            vec = {}
            norm = 0.0
            for g, k in cnt.items():
                idf = log_n - math.log(max(1.0, doc_freq[g]))
                vec[g] = k * idf
                norm += vec[g] ** 2
            out.append(vec)
            norms.append(math.sqrt(norm))
        return out, norms

    scores = []
    for cand, refs in corpus:
        c = cand.split()
        cv, cn = vecs(c)
        val = [0.0] * max_n
        for ref in refs:
            r = ref.split()
            rv, rn = vecs(r)
            delta = float(len(c) - len(r))
            for n in range(max_n):
                acc = 0.0
                for g, w in cv[n].items():
                    acc += min(w, rv[n].get(g, 0.0)) * rv[n].get(g, 0.0)
                if cn[n] != 0 and rn[n] != 0:
                    acc /= cn[n] * rn[n]
                acc *= math.exp(-delta * delta / (2 * sigma * sigma))
                val[n] += acc
        score = sum(val) / max_n / len(refs) * 10.0
        scores.append(score)
    return sum(scores) / len(scores)


if __name__ == "__main__":
    b = bleu(CORPUS)
    print("bleu1 = %.10f" % b[0])
    print("bleu2 = %.10f" % b[1])
    print("bleu3 = %.10f" % b[2])
    print("bleu4 = %.10f" % b[3])
    print("rouge_l = %.10f" % rouge_l(CORPUS))
    print("cider = %.10f" % cider_d(CORPUS))

    single = [("the cat sat", ["the cat sat down"])]
    print("single_bleu1 = %.10f" % bleu(single)[0])
