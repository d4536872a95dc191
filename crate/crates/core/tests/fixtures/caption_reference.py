"""Regenerates caption_reference.json from the COCO caption evaluation code.

usage: python3 caption_reference.py /path/to/pycocoevalcap-parent

Plain CIDEr is computed with a patched copy of the CIDEr-D scorer: no
clipping, no length penalty, no factor of 10.
"""
import json
import os
import sys
import types

sys.path.insert(0, sys.argv[1])
from pycocoevalcap.bleu.bleu import Bleu  # noqa: E402
from pycocoevalcap.cider.cider import Cider  # noqa: E402
from pycocoevalcap.rouge.rouge import Rouge  # noqa: E402
import pycocoevalcap.cider.cider_scorer as cs  # noqa: E402

here = os.path.dirname(os.path.abspath(__file__))


def tokenize(s):
    out, word = [], ""
    for ch in s.lower():
        if ch.isalnum():
            word += ch
            continue
        if word:
            out.append(word)
            word = ""
        if not ch.isspace():
            out.append(ch)
    if word:
        out.append(word)
    return " ".join(out)


def plain_cider_module():
    src = open(cs.__file__).read()
    for needle in ("min(vec_hyp[n][ngram], vec_ref[n][ngram])", "val[n] *= np.e**(-(delta**2)/(2*self.sigma**2))", "score_avg *= 10.0"):
        assert src.count(needle) == 1, needle
    src = src.replace("min(vec_hyp[n][ngram], vec_ref[n][ngram])", "vec_hyp[n][ngram]")
    src = src.replace("val[n] *= np.e**(-(delta**2)/(2*self.sigma**2))", "pass")
    src = src.replace("score_avg *= 10.0", "pass")
    mod = types.ModuleType("plain_cider_scorer")
    exec(compile(src, "plain_cider_scorer", "exec"), mod.__dict__)
    return mod


corpus = json.load(open(os.path.join(here, "caption_corpus.json")))
res = {r["qid"]: [tokenize(r["predicted"])] for r in corpus}
gts = {r["qid"]: [tokenize(s) for s in r["references"]] for r in corpus}
order = [r["qid"] for r in corpus]

bleu, _ = Bleu(4).compute_score(gts, res)
rouge, rouge_each = Rouge().compute_score(gts, res)
cider_d, cider_d_each = Cider().compute_score(gts, res)

plain = plain_cider_module().CiderScorer(n=4, sigma=6.0)
for q in order:
    plain += (res[q][0], gts[q])
cider, cider_each = plain.compute_score()

out = {
    "bleu": list(bleu),
    "rouge_l": rouge,
    "rouge_l_each": list(map(float, rouge_each)),
    "cider": float(cider),
    "cider_each": list(map(float, cider_each)),
    "cider_d": float(cider_d),
    "cider_d_each": list(map(float, cider_d_each)),
}
json.dump(out, open(os.path.join(here, "caption_reference.json"), "w"), indent=1)
print(json.dumps(out["bleu"]), out["rouge_l"], out["cider"], out["cider_d"])
