"""Non-Gaussian reconciliation toolkit for continuous-variable QKD.

Submodules: ``randsrc`` (seeded streams), ``postselect`` (virtual photon
subtraction), ``channel`` (AWGN), ``mdr`` (multidimensional reconciliation),
``metldpc`` (multi-edge LDPC codes and decoders), ``secanalysis`` (key rates)
and ``harness`` (FER/AIN campaigns).
"""

__version__ = "0.1.0"
