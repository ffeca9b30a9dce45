"""EEG seizure detection: EDF reading, spectral images, ensemble inference, scoring."""

from ._szdetect import (
    BANDS,
    GRID,
    SUB_WINDOWS,
    WINDOW_SECONDS,
    Model,
    SzdError,
    band_magnitudes,
    default_synth_config,
    default_train_config,
    electrode_positions,
    polar_project,
    read_edf,
    read_image_store,
    score,
    synth_patient,
)

__all__ = [
    "BANDS",
    "GRID",
    "SUB_WINDOWS",
    "WINDOW_SECONDS",
    "Model",
    "SzdError",
    "band_magnitudes",
    "default_synth_config",
    "default_train_config",
    "electrode_positions",
    "polar_project",
    "read_edf",
    "read_image_store",
    "score",
    "synth_patient",
]
