"""Walk through one synthetic bearing: raw records, the 38 handcrafted
features, and how they drift as the bearing wears out."""
import numpy as np

from bearingrul.features import FEATURE_NAMES, feature_matrix, savitzky_golay
from bearingrul.labels import fpt_3sigma, rms_hi
from bearingrul.synthetic import synthetic_run

#%% a run-to-failure record set
run = synthetic_run(1, 1, n_records=200, seed=0)
print(run.name, len(run), "records of", run.records[0].horizontal.size, "samples per axis")

first, last = run.records[0], run.records[-1]
print("horizontal peak, first vs last record: %.3f  %.3f" % (np.abs(first.horizontal).max(), np.abs(last.horizontal).max()))

#%% features per record
F = feature_matrix(run)
print("feature matrix", F.shape)
# ratios only make sense for features that stay positive
positive = (F > 0).all(axis=0)
growth = np.where(positive, F[-20:].mean(axis=0) / F[:20].mean(axis=0), 1.0)
for i in np.argsort(-np.abs(np.log(growth)))[:6]:
    print("  %-10s x%.2f" % (FEATURE_NAMES[i], growth[i]))

#%% RMS health indicator and the 3-sigma first predicting time
hi = rms_hi(run)
fpt = fpt_3sigma(hi)
print("fpt index", fpt.index, "baseline mean %.4f std %.4f" % (fpt.baseline_mean, fpt.baseline_std))

smooth = savitzky_golay(hi.values)
print("rms at start/end (smoothed): %.4f  %.4f" % (smooth[0], smooth[-1]))
