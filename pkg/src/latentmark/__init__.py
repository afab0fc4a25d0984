"""Double-channel latent watermarking: LDPC seed header plus repetition-coded payload."""

from .channel import ChannelSpec, apply_channel, awgn, compose, resample, run_trials, scale, signflip, sweep_report
from .gs import GsParams, pack_payload, unpack_payload
from .keys import PrcParams, UserDatabase, WatermarkKeySet, keygen, keygen_signature, load_keys, save_keys
from .pipeline import WatermarkConfig, audit_embeddings, embed, extract
from .prc import DecoderConfig, prc_decode, prc_encode
from .sampler import dps_sample, posterior_estimate
from .stats import audit_normality, calibrate_tau, fpr_detection, trace

__version__ = "0.1.0"
