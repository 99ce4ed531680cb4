# %% [markdown]
# # Grouped vs pooled, with and without position supervision
# Runs the synthetic benchmark from `visa_skill.experiments` for one seed:
# 4 users x 8 trials, 4-fold cross-validation. Each variant takes about
# four minutes on one CPU core. Pass `epochs=` to `run` for a quicker look.

# %%
from visa_skill import experiments
from visa_skill.model import POOLED, VISA

seed = 0
episodes = experiments.dataset(seed)
results = {}
for variant, supervised in ((VISA, False), (POOLED, False), (VISA, True)):
    r = experiments.run(seed, variant, supervised, episodes=episodes)
    results[(variant, supervised)] = r
    print(r.summary(), flush=True)

# %% [markdown]
# Fold-level detail: correlation and MAE per held-out fold.

# %%
for key, r in results.items():
    print(key, [(round(f.corr, 3), round(f.mae, 2)) for f in r.folds])
