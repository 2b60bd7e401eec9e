"""Default physical-layer, MAC and experiment parameters.

Every tunable constant used by the library lives here so that experiments
are reproducible from one place.  Powers are linear (mW).
"""

import math

# Propagation
TX_POWER_MW = 1.0
PATH_LOSS_EXPONENT = 4.0

# Radio thresholds are derived from two target ranges: a decodable one-hop
# range and a (wider) carrier-sense range.
LINK_RANGE_M = 250.0
CARRIER_SENSE_RANGE_M = 550.0
SINR_THRESHOLD = 10.0  # 10 dB

NOISE_FLOOR_MW = TX_POWER_MW / LINK_RANGE_M**PATH_LOSS_EXPONENT / SINR_THRESHOLD
# Carrier sense fires at T_RX - W, which must equal the power at CS range.
RX_SENSITIVITY_MW = TX_POWER_MW / CARRIER_SENSE_RANGE_M**PATH_LOSS_EXPONENT + NOISE_FLOOR_MW

# Contention
EXACT_MICS_CAP = 25
HEURISTIC_MICS_LIMIT = 2000

# MAC (802.11b DSSS-style timing), durations in microseconds
SLOT_TIME_US = 20
SIFS_US = 10
DIFS_US = 50
PHY_HEADER_US = 192
CW_MIN = 31
CW_MAX = 1023
SHORT_RETRY_LIMIT = 7
LONG_RETRY_LIMIT = 4
BIT_RATE = 2_000_000
RTS_BYTES = 20
CTS_BYTES = 14
ACK_BYTES = 14
DATA_BYTES = 512
QUEUE_LIMIT = 50

# Routing / SAR
RATING_THRESHOLD = 0.1
MAX_CONFIGS = 200
HOP_SLACK = 0

# Experiments
VALIDATION_NODES = 144
VALIDATION_AREA_M = 1600.0
VALIDATION_LINKS = 25
GRID_SIDE = 6
GRID_SPACING_M = 200.0


def mw_to_dbm(p):
    return 10.0 * math.log10(p)


def dbm_to_mw(dbm):
    return 10.0 ** (dbm / 10.0)
