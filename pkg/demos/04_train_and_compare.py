"""Train the post-LSTM hypernetwork and the naive baseline on a synthetic city.

Destinations depend on the time of day, so only the model that reads the
start time can guess early.  Takes about a minute on one core.
"""
import numpy as np

from hyperdest.encode import sample_references
from hyperdest.evaluation import compare, evaluate
from hyperdest.synth import SynthConfig, bayes_prediction, generate
from hyperdest.geo import haversine_np
from hyperdest.train import TrainConfig, train

cfg = SynthConfig(n_trajectories=1200, seed=0, concentration=8.0)
corpus = generate(cfg)
train_set, val_set = corpus[:1000], corpus[1000:]
refs = sample_references(train_set, n=256, min_sep_km=0.1, seed=0)
print(len(train_set), "training trips,", len(val_set), "validation trips")

# %% how well could anyone do? the Bayes predictor knows the generator
def bayes_mhd_at(q, use_time):
    errs = []
    for t in val_set:
        n = max(1, int(np.floor(q * len(t) + 0.5)))
        guess = bayes_prediction(t.points[:n], t.meta.timestamp / 3600 if use_time else None, cfg)
        errs.append(haversine_np(guess[0], guess[1], t.points[-1, 0], t.points[-1, 1]))
    return np.mean(errs)

print("Bayes MHD_0.1 with time %.3f, without %.3f" % (bayes_mhd_at(0.1, True), bayes_mhd_at(0.1, False)))

# %% fit both models
reports = []
for variant in ("post_lstm", "naive_baseline"):
    res = train(train_set, refs, TrainConfig(variant=variant, epochs=8, batch_size=32, lr=3e-3))
    print(variant, "epoch losses", np.round(res.epoch_losses, 3))
    reports.append(evaluate(res.model, val_set, label=variant))

# %% published Porto figures are listed below, for reference only
print(compare(reports))
