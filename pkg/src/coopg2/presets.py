"""
Ready-made experiment suites.

Rates are written as lifetimes.  The radiative lifetime 1.76 ns, the
deformation-potential GaAs parameters (D_e = 7 eV, D_h = -3.5 eV,
confinement energies 2.9 meV and 4.4 meV, 5370 kg/m^3, 5110 m/s), the ohmic
coupling alpha = 7.5e-5 with a 4 meV cutoff, the fitted PPD lifetime 3.9 ns,
the strong PPD lifetimes 199 ps and 221 ps, and the detector FWHM of 240 ps
are the reference values of the measurement-induced and superradiant
studies.  Pump-ratio sweeps {0.1, 1, 10} are reconstructed choices.
"""

from __future__ import annotations

from coopg2.config import SuiteConfig, parse_config

_NUMERICS = """
[numerics]
dt = 0.1 ps                 # pure dephasing is exact per step; splitting error ~ gamma*dt
t_mem = 10 ps               # memory cutoff, well past polaron formation
svd_threshold = 1e-8        # relative singular-value cutoff
max_bond = 256
tau_fine = 20 ps
tau_max = 6 ns
n_coarse = 1500             # geometric points; keeps spacing below 24 ps for the 240 ps IRF
richardson = false
stationarity_tol = 1e-9
"""

_FIT = """
[fit]
window_start = 1 ps         # excludes the ps-scale polaron drop
window_end = inf
"""

_SPC = """phonons = deformation-potential
temperature = 4 K
d_e = 7 eV
d_h = -3.5 eV
electron_confinement = 2.9 meV
hole_confinement = 4.4 meV
mass_density = 5370 kg/m^3
sound_speed = 5110 m/s
normalization = textbook
"""

_OHMIC = """phonons = ohmic
temperature = 4 K
alpha = 7.5e-5
cutoff = 4 meV
"""


def _exp(name: str, body: str, geometry: str = "measurement-induced", gamma: str = "1/1.76 ns",
         gamma_p: str = "1/1.76 ns", gamma_d: str = "0 /ps", extra: str = "", phonons: str = "phonons = none\n",
         kind: str = "g2") -> str:
    return (f"\n[experiment {name}]\nkind = {kind}\ngeometry = {geometry}\ngamma = {gamma}\n"
            f"gamma_p = {gamma_p}\ngamma_d = {gamma_d}\n{extra}{phonons}{body}")


def _fig2a() -> str:
    return ("[output]\ntag = fig2a\n" + _NUMERICS + _FIT
            + _exp("spc", "fits = PpdModel, InitialDropModel\n", phonons=_SPC)
            + _exp("ohmic", "fits = PpdModel\n", phonons=_OHMIC))


def _fig2b() -> str:
    return ("[output]\ntag = fig2b\n" + _NUMERICS
            + _exp("spc", "", phonons=_SPC)
            + _exp("spc_ppd221", "", extra="ppd_extra = 1/221 ps    # weak extra PPD on top of phonons\n",
                   phonons=_SPC)
            + _exp("ppd199", "method = regression\n", gamma_d="1/199 ps")
            + _exp("ppd221", "method = regression\n", gamma_d="1/221 ps"))


def _fig2c() -> str:
    body = "t_max = 10 ns\nstride = 20\ninitial = psi_s\n"
    return ("[output]\ntag = fig2c\n" + _NUMERICS
            + _exp("spc", body, gamma="0 /ps", gamma_p="0 /ps", phonons=_SPC, kind="coherence")
            + _exp("ppd3.9ns", body, gamma="0 /ps", gamma_p="0 /ps", gamma_d="1/3.9 ns", kind="coherence")
            + _exp("ohmic", body, gamma="0 /ps", gamma_p="0 /ps", phonons=_OHMIC, kind="coherence"))


def _fig2d() -> str:
    body = "t_max = 10 ns\nstride = 20\ninitial = psi_s\n"
    return ("[output]\ntag = fig2d\n" + _NUMERICS
            + _exp("spc", body, gamma="0 /ps", gamma_p="0 /ps", phonons=_SPC, kind="coherence")
            + _exp("spc_ppd221", body, gamma="0 /ps", gamma_p="0 /ps", extra="ppd_extra = 1/221 ps\n",
                   phonons=_SPC, kind="coherence")
            + _exp("ppd199", body, gamma="0 /ps", gamma_p="0 /ps", gamma_d="1/199 ps", kind="coherence"))


_PUMP_RATIOS = (("0.1", "1/17.6 ns"), ("1", "1/1.76 ns"), ("10", "1/0.176 ns"))


def _fig4() -> str:
    text = "[output]\ntag = fig4\n" + _NUMERICS
    for ratio, pump in _PUMP_RATIOS:
        suffix = f"pump{ratio}"
        text += _exp(f"none_{suffix}", "method = regression\n", geometry="superradiant", gamma_p=pump)
        text += _exp(f"spc_{suffix}", "", geometry="superradiant", gamma_p=pump, phonons=_SPC)
        text += _exp(f"ppd199_{suffix}", "method = regression\n", geometry="superradiant", gamma_p=pump,
                     gamma_d="1/199 ps")
    return text


def _fig5() -> str:
    # pump lifetime half the radiative lifetime (reconstructed reading of the parameter set)
    return ("[output]\ntag = fig5\n" + _NUMERICS
            + _exp("spc", "", geometry="superradiant", gamma_p="1/0.88 ns", phonons=_SPC)
            + _exp("ppd3.9ns", "method = regression\n", geometry="superradiant", gamma_p="1/0.88 ns",
                   gamma_d="1/3.9 ns"))


def _fig6() -> str:
    text = "[output]\ntag = fig6\n" + _NUMERICS + _FIT + "\n[postprocess]\nirf_fwhm = 240 ps\n"
    conv = "convolve = true\n"
    text += _exp("spc", conv + "fits = PpdModel\n", phonons=_SPC)
    text += _exp("ppd3.9ns", conv + "method = regression\n", gamma_d="1/3.9 ns")
    text += _exp("ppd199", conv + "method = regression\n", gamma_d="1/199 ps")
    text += _exp("spc_ppd221", conv, extra="ppd_extra = 1/221 ps\n", phonons=_SPC)
    for ratio, pump in _PUMP_RATIOS:
        text += _exp(f"sr_none_pump{ratio}", conv + "method = regression\n", geometry="superradiant",
                     gamma_p=pump)
    text += _exp("sr_spc", conv, geometry="superradiant", gamma_p="1/0.88 ns", phonons=_SPC)
    text += _exp("sr_ppd3.9ns", conv + "method = regression\n", geometry="superradiant",
                 gamma_p="1/0.88 ns", gamma_d="1/3.9 ns")
    return text


PRESETS = {
    "fig2a": ("SPC and ohmic g2 with PPD and initial-drop fits", _fig2a),
    "fig2b": ("SPC, SPC plus weak PPD, and strong PPD (199 ps and 221 ps variants)", _fig2b),
    "fig2c": ("coherence from the symmetric Dicke state: SPC, PPD 3.9 ns, ohmic", _fig2c),
    "fig2d": ("coherence from the symmetric Dicke state: SPC, SPC plus PPD, PPD", _fig2d),
    "fig4": ("superradiant g2 over pump ratios 0.1, 1, 10 without dephasing, with SPC, with PPD 199 ps", _fig4),
    "fig5": ("superradiant g2: SPC against its PPD approximation", _fig5),
    "fig6": ("240 ps IRF-convolved variants of the g2 suites", _fig6),
}


def preset_text(name: str) -> str:
    try:
        return PRESETS[name][1]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


def preset(name: str) -> SuiteConfig:
    return parse_config(preset_text(name))
