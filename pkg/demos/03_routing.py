# coding: utf-8

# # Routing around scheduling conflicts
#
# On a 6x6 grid with 200 m spacing, two connections cross the middle. The
# shortest routes place links close enough that one link's sender spoils
# another's reception. The search starts from the minimum-hop routing and
# repeatedly forbids the worst link from sharing the network with the links
# that hurt it, re-solving the flow problem each time.

# In[1]:

from schedaware import grid_topology, iar_baseline, make_scenario, sar_search, shortest_path_baseline

sc = make_scenario(grid_topology(6, 200.0))
connections = [(26, 16, 1e5), (33, 21, 1e5)]

sp = shortest_path_baseline(sc, connections)
iar = iar_baseline(sc, connections)
search = sar_search(sc, connections)

for name, cfg in (("shortest path", sp), ("interference aware", iar), ("scheduling aware", search.best)):
    print(f"{name:>20}: cim={cfg.cim:.3f}  paths={cfg.paths}")


# The search log shows each configuration it rated and why it stopped.

# In[2]:

print(search.log_text())


# # Checking with the simulator
#
# Each routing is simulated with both connections offered 100 kb/s.

# In[3]:

from schedaware import Route, simulate

for name, cfg in (("shortest path", sp), ("interference aware", iar), ("scheduling aware", search.best)):
    res = simulate(sc, routes=[Route(p, 1e5) for p in cfg.paths], duration=5.0, seed=1)
    st = res.stats
    print(f"{name:>20}: delivered {st.flow_throughput.sum() / 1e3:.0f} kb/s, "
          f"timeouts {int(st.rts_timeouts.sum() + st.ack_timeouts.sum())}")
