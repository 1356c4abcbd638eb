import numpy as np

from semcontest import channel
from semcontest.channel import LinkModel
from semcontest.contest import Contestant
from semcontest.quality import SemanticTask

GAMMA = channel.calibrated_snr_threshold()


def contestants(kinds, gains):
    return [Contestant(i, SemanticTask(k), LinkModel(5e6, 9e-6, GAMMA, g, 5.0))
            for i, (k, g) in enumerate(zip(kinds, gains))]


def grid_points(grid):
    return [float(p) for p in np.asarray(grid.points())]
