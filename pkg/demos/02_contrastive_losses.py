# %% [markdown]
# # The contrastive losses on toy tensors
#
# Two views of the same batch, shaped [batch, time, channels]. The temporal
# term contrasts each timestamp against other timestamps of the same series;
# the instance term contrasts it against other series at the same time.

# %%
import numpy as np

from tsvforge import ViewPair, dual_loss, hierarchical_loss, instance_loss, temporal_loss
from tsvforge.numerics import GradTape, Tensor, backward

rng = np.random.default_rng(0)
r = rng.normal(size=(4, 16, 8))

# %% [markdown]
# Identical views that are far apart from everything else are easy to tell
# apart, so both terms are small. Unrelated views are not.

# %%
aligned = ViewPair(3 * r, 3 * r)
unrelated = ViewPair(r, rng.normal(size=r.shape))
for name, pair in [("aligned", aligned), ("unrelated", unrelated)]:
    print(f"{name:10s} temporal={temporal_loss(pair).item():.3f}  instance={instance_loss(pair).item():.3f}  "
          f"dual={dual_loss(pair).item():.3f}")

# %% [markdown]
# A single series has no other instances to contrast with, and a single
# timestamp has no other timestamps, so those terms vanish.

# %%
print("B=1 instance loss:", instance_loss(ViewPair(r[:1], r[:1] + 1)).item())
print("T=1 temporal loss:", temporal_loss(ViewPair(r[:, :1], r[:, :1] + 1)).item())

# %% [markdown]
# Gradients come from the small tape-based autodiff in `tsvforge.numerics`.
# A few plain gradient steps on one view pull it towards the other.

# %%
a, b = rng.normal(size=(4, 16, 8)), rng.normal(size=(4, 16, 8))
for step in range(6):
    with GradTape() as tape:
        ta = tape.watch(Tensor(a), "a")
        loss = hierarchical_loss(ViewPair(ta, b))
    grad = backward(tape, loss)["a"].data
    print(f"step {step}: loss {loss.item():.4f}")
    a = a - 0.5 * grad
