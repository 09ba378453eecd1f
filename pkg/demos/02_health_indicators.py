"""Compare label curves from the simple generators and the learned
indicators on a small synthetic condition.  Training budgets are tiny here,
so the learned curves are only indicative."""
import numpy as np

from bearingrul.autodiff import TrainConfig
from bearingrul.ingest import fit_norm_stats, normalize
from bearingrul.labels import build_labels, fit_label_models, fpt_3sigma, orient_and_scale, raw_hi, rms_hi
from bearingrul.metrics import mad, monotonicity, trendiness
from bearingrul.synthetic import synthetic_corpus

runs = synthetic_corpus(7, 120, seed=1)
stats = fit_norm_stats(runs)
nruns = [normalize(r, stats) for r in runs]
test = nruns[0]


def describe(name, values, raw=None):
    line = "%-10s mon %.3f  trend %+.3f  mad %.4f" % (name, monotonicity(values), trendiness(values), mad(values))
    if raw is not None:
        line += "  (raw mad %.4f)" % mad(orient_and_scale(raw))
    print(line)


#%% hand-made labels
describe("linear", build_labels("linear", test).values)
describe("piecewise", build_labels("piecewise", test, fpt_index=fpt_3sigma(rms_hi(runs[0])).index).values)
describe("rms", build_labels("rms", test).values, rms_hi(test).values)

#%% learned indicators
budget = TrainConfig(1e-3, 64, 8, 3)
for method in ("pca", "f-vqvae", "vqvae"):
    models = fit_label_models(method, nruns, budget, seed=15)
    curve = build_labels(method, test, models)
    raw = raw_hi(method, test, models).values
    describe(method, curve.values, raw)
    if models.perplexity is not None:
        print("           codebook perplexity %.2f" % models.perplexity)
