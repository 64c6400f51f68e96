"""Two-sided mmWave beam alignment and RIS reflection design toolkit.

Simulates sparse multipath channels, runs the ping-pong pilot protocol
under pluggable sensing policies, trains LSTM-based active sensing
end-to-end on a built-in micro NN engine, and benchmarks against
classical and learned baselines.
"""

__version__ = "0.1.0"
