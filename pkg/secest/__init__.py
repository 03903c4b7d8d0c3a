"""
secest - Secure state estimation under sparse, time-varying sensor attacks

l1 decoding of linear systems whose sensors are partly corrupted, together
with decoder-aware feedback design, a combined secure estimator and Kalman
filter, quadrotor attack scenarios and Monte-Carlo success-rate studies.
"""

__version__ = "1.0.0"
__author__ = "secest developers"
