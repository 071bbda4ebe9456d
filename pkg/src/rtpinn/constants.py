"""Physical constants (CODATA 2018, exact SI values)."""

PLANCK_H = 6.62607015e-34  # J s
BOLTZMANN_K = 1.380649e-23  # J / K
SPEED_OF_LIGHT = 299792458.0  # m / s
ELECTRON_VOLT = 1.602176634e-19  # J


def ev_to_kelvin(t_ev):
    return t_ev * ELECTRON_VOLT / BOLTZMANN_K
