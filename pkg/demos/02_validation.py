# coding: utf-8

# # Do the ratings predict simulated timeouts?
#
# We draw random topologies, pick disjoint one-hop links, rate them, then run
# the 802.11 simulator with every link saturated. For each link we compare the
# predicted ratings with the observed timeout fractions, alongside three
# simpler predictors: received interference, receiver busy time and SINR.
#
# A full run uses 10 scenarios of 144 nodes and 25 links for 30 simulated
# seconds. This demo uses a lighter batch so it finishes in about a minute.

# In[1]:

from schedaware import pearson
from schedaware.analysis import BatchParams, run_validation_batch

params = BatchParams(n_nodes=144, area=1600.0, n_links=25, duration=3.0)
report, result = run_validation_batch(3, params)
print(report.to_text())


# The Spearman column is the one to read. Large positive values mean that a
# higher rating goes with more timeouts.
#
# # Where do the collisions come from?
#
# Each lost RTS or DATA frame is logged with the links that were transmitting
# at the time. If one of them shares a contention set with the victim, the
# collision is one the schedule itself allowed (a hidden terminal). Those are
# the collisions the ratings model.

# In[2]:

print("intra-set share, all interferers:", round(result.intra_share, 4))
print("intra-set share, minimal culprits:", round(result.intra_share_minimal, 4))
print(result.histogram_csv())


# # Timeouts cost capacity
#
# Normalizing each link's throughput by what it could get in the free share
# of its channel time shows how strongly losses eat into capacity.

# In[3]:

tout, norm = result.capacity_series()
print("Pearson(timeout %, normalized throughput):", round(pearson(tout, norm), 3), "over", len(tout), "links")
