"""RL-VAE: molecular graph autoencoder with an MDP value-function decoder."""

__version__ = "0.1.0"
