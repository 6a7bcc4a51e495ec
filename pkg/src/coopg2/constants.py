"""Internal unit system: time in ps, rates in 1/ps, energies in meV."""

HBAR = 0.6582119569  # meV ps
KB = 0.08617333262  # meV / K

# SI values used only when converting material parameters
HBAR_SI = 1.054571817e-34  # J s
EV_SI = 1.602176634e-19  # J
PS_PER_S = 1e12
PS_PER_NS = 1e3


def rate_from_lifetime_ns(lifetime_ns: float) -> float:
    """Rate in 1/ps for a lifetime given in ns."""
    return 1.0 / (lifetime_ns * PS_PER_NS)


def omega_from_mev(energy_mev: float) -> float:
    """Angular frequency in rad/ps for an energy hbar*omega in meV."""
    return energy_mev / HBAR
