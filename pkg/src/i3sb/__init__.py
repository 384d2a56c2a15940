"""Diffusion-bridge image restoration with non-Markovian generalized posteriors.

Modules
-------
tensor_io    image container and the BRSTNSR1 / PGM file formats
schedule     diffusion-rate profile, time grid and accumulated variances
posterior    bridge marginal, DDPM posterior, generalized posterior and g_n policies
predictor    noise-predictor interface and the two oracle predictors
mlp          trainable patch MLP predictor
sampler      the generation loop
degrade      synthetic corruption and toy datasets
metrics      SSIM, Haralick distance, RMSE
diagnostics  verification suites
cli          ``i3sb`` command line
"""

__version__ = "0.1.0"
