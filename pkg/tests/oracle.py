"""Plain-Python reference for the ensemble estimator.

Counts live in dicts keyed by context tuples, weights are kept as plain
probabilities. Nothing here touches the numba kernels.
"""

import math

from readsort.context_models import FcmConfig, StcmConfig

SYM = {"A": 0, "C": 1, "G": 2, "T": 3}


def _syms(s):
    return [SYM[c] for c in s] if isinstance(s, str) else [int(c) for c in s]


class OracleEnsemble:
    def __init__(self, models, gamma=0.99, floor=2.0**-16):
        self.models = list(models)
        self.gamma = gamma
        self.floor = floor
        self.tables = [dict() for _ in self.models]

    def _base(self, cfg):
        return cfg.base if isinstance(cfg, StcmConfig) else cfg

    def train(self, seq):
        s = _syms(seq)
        for m, cfg in enumerate(self.models):
            k = self._base(cfg).order
            tab = self.tables[m]
            for j in range(k, len(s)):
                row = tab.setdefault(tuple(s[j - k:j]), [0, 0, 0, 0])
                row[s[j]] += 1

    def _model_probs(self, m, ctx, alpha):
        row = self.tables[m].get(tuple(ctx))
        if row is None or sum(row) == 0:
            return [0.25] * 4, -1
        tot = sum(row)
        probs = [(c + alpha) / (tot + 4 * alpha) for c in row]
        best = max(range(4), key=lambda i: (row[i], -i))
        return probs, best

    def _floor(self, q):
        best = max(range(4), key=lambda i: (q[i], -i))
        deficit = 0.0
        q = list(q)
        for i in range(4):
            if i != best and q[i] < self.floor:
                deficit += self.floor - q[i]
                q[i] = self.floor
        q[best] -= deficit
        return q

    def code_length(self, seq):
        s = _syms(seq)
        M = len(self.models)
        logw = [0.0] * M
        tol = [[] for _ in range(M)]
        misses = [0] * M
        bits = 0.0
        w0 = 1.0 / M
        logw = [math.log(w0)] * M
        for j, sym in enumerate(s):
            hist = s[:j]
            preds, bests = [], []
            for m, cfg in enumerate(self.models):
                base = self._base(cfg)
                k = base.order
                if j < k:
                    preds.append([0.25] * 4)
                    bests.append(-1)
                    continue
                if isinstance(cfg, StcmConfig):
                    ctx = tol[m][len(tol[m]) - k:] if k else []
                    alpha = cfg.fallback_alpha if misses[m] > 0 else base.alpha
                else:
                    ctx = hist[j - k:]
                    alpha = base.alpha
                p, b = self._model_probs(m, ctx, alpha)
                preds.append(p)
                bests.append(b)
            top = max(logw)
            ws = [math.exp(u - top) for u in logw]
            wt = sum(ws)
            mix = [sum(ws[m] * preds[m][i] for m in range(M)) / wt for i in range(4)]
            bits -= math.log2(self._floor(mix)[sym])
            full = hist + [sym]
            for m, cfg in enumerate(self.models):
                logw[m] = self.gamma * (logw[m] + math.log(preds[m][sym]))
                if not isinstance(cfg, StcmConfig):
                    continue
                k = cfg.base.order
                if j < k or bests[m] < 0:
                    tol[m] = list(full)
                    misses[m] = 0
                elif bests[m] == sym:
                    tol[m] = tol[m] + [sym]
                    misses[m] = 0
                else:
                    misses[m] += 1
                    if misses[m] > cfg.max_substitutions:
                        tol[m] = list(full)
                        misses[m] = 0
                    else:
                        tol[m] = tol[m] + [bests[m]]
        return bits


def small_stcm_models():
    """Low orders so that tolerant contexts engage on short strings."""
    return [FcmConfig(0, 1.0), FcmConfig(2), FcmConfig(4, 1 / 2),
            StcmConfig(FcmConfig(3), max_substitutions=1, fallback_alpha=1.0)]
