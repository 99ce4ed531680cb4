# %% [markdown]
# # Quickstart
# Generate a small synthetic suturing dataset, train the grouped model for a
# few epochs and look at its predictions and group assignments.
# Runs in well under a minute on one CPU core.

# %%
from dataclasses import replace

import numpy as np

from visa_skill.diffcore import SgdConfig
from visa_skill.evalkit import mae, spearman
from visa_skill.model import ModelConfig, SkillModel
from visa_skill.synthdata import SynthConfig, generate_dataset
from visa_skill.training import assignment_maps, group_tool_iou, predict, train

episodes, names = generate_dataset(SynthConfig(seed=0, frame_size=32, frame_count=32), n_users=3,
                                   trials_per_user=3)
print(len(episodes), "episodes;", episodes[0].frames.shape, "frames each")
print("scores:", np.round([ep.score for ep in episodes], 1))

# %% [markdown]
# A deliberately tiny model so the demo stays fast.

# %%
config = ModelConfig(K=3, C=8, c_hidden=4, c_out=8, d_h=4, T=4, centroid_init="kmeans")
model = SkillModel(config, seed=0)
sgd = SgdConfig(initial_lr=1e-3, decay_factor=0.1, decay_every_epochs=10, batch_size=3, epochs=10,
                method="adam")
for entry in train(model, episodes, sgd):
    print(entry.line())

# %%
pred = predict(model, episodes)
truth = [ep.score for ep in episodes]
print("training-set spearman", round(spearman(pred, truth), 3), "mae", round(mae(pred, truth), 2))

# %% [markdown]
# Hard group labels per snippet and feature cell, plus how well group m
# overlaps the tool region.

# %%
maps = assignment_maps(model, episodes[:1])[0]
print("label map shape (T, H, W):", maps.shape)
print(maps[0])
print("group m IoU with tool mask:", round(group_tool_iou(model, episodes), 3))

# %% [markdown]
# Position supervision is a one-flag change.

# %%
sup = SkillModel(replace(config, supervise_positions=True), seed=0)
train(sup, episodes, sgd)
print("supervised group m IoU:", round(group_tool_iou(sup, episodes), 3))
