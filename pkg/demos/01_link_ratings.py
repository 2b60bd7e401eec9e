# coding: utf-8

# # Rating links before they carry traffic
#
# Three one-hop links share a small neighbourhood. A and B have sources that
# hear each other, so the MAC lets only one of them transmit at a time. C is
# out of earshot of both sources, but C's source lands at A's receiver with
# enough power to spoil A's packets. We build that situation directly from a
# received-power matrix so every number below can be checked by hand.

# In[1]:

import numpy as np

from schedaware import (ActiveLink, RadioParams, SignalField, build_contention_graph, cim,
                        enumerate_emics, enumerate_mics_exact, rate_links)

# receiver sensitivity 1.0, noise 0.1, capture ratio 10, carrier sense at 0.9
radio = RadioParams(tx_power=1.0, rx_sensitivity=1.0, sinr_threshold=10.0, noise_floor=0.1)

theta = np.full((6, 6), 0.001)
np.fill_diagonal(theta, 0.0)
for (a, b), v in {(0, 1): 5.0, (2, 3): 5.0, (4, 5): 5.0, (0, 2): 2.0, (4, 1): 0.5, (5, 1): 0.05}.items():
    theta[a, b] = theta[b, a] = v
field = SignalField(theta)
links = [ActiveLink(0, 1), ActiveLink(2, 3), ActiveLink(4, 5)]
names = "ABC"


# # Who may transmit together
#
# Two links can be active at once when neither source carrier-senses the
# other. The maximal groups of such links are the contention sets; every
# link's weight in the schedule is the share of set slots it appears in.

# In[2]:

graph = build_contention_graph(links, field, radio)
mics = enumerate_mics_exact(graph)
for s, mu in zip(mics.sets, mics.mu):
    print("set", "".join(names[i] for i in s), "weight", mu)


# The groups are {A, C} and {B, C}. C is always on the air while A or B
# sends, so whenever A runs, C runs with it.
#
# Not every group can actually finish its DATA frames together. Dropping the
# members that break each other's reception leaves the groups that really
# complete:

# In[3]:

emics = enumerate_emics(mics, field, radio)
print(["".join(names[i] for i in s) for s in emics.sets])


# # The ratings
#
# The RTS rating is the chance that a link's RTS is lost because a concurrent
# sender reaches its receiver first. The ACK rating (with virtual carrier
# sense) is the chance that the DATA frame is corrupted. A link shares each of
# its groups with at most one troublemaker here, so A's RTS rating is 1/2.
# C's source always clobbers A's DATA, so A's ACK rating is 1.

# In[4]:

ratings = rate_links(mics, field, radio)
for i, n in enumerate(names):
    print(f"{n}: rts={ratings.rts[i]:.3f}  ack={ratings.ack[i]:.3f}  ack_vcs={ratings.ack_vcs[i]:.3f}")
print("configuration interaction metric:", cim(ratings))


# In[5]:

print(ratings.to_csv())
