"""cuemidi: multi-instrument MIDI generation conditioned on emotion values
and temporal boundaries (scene cuts), with a toy-scale trainable transformer.
"""

from .boundaries import (BoundaryState, ChordSpec, boost_chord_velocities,
                         detect_strong_chords, filter_min_gap, insert_chord_tokens,
                         step_inference_offset, training_offsets)
from .emotion import (EMOTIONS, RAW_TABLE, EmotionCondition, EmotionTable,
                      bin_condition, bin_midpoint, mixture_mean, mixture_sample,
                      rescale_table)
from .features import (DatasetRecord, MidiFeatures, build_record, compute_features,
                       content_hash, derive_arousal, derive_valence, estimate_tempo)
from .midi_io import (INSTRUMENTS, FiveTrackNotes, Note, NoteList, parse_midi,
                      write_midi)
from .model import (ConditionalMusicTransformer, ModelConfig, TrainBatch,
                    gradient_check, load_checkpoint, save_checkpoint,
                    sequence_loss, sequence_metrics, train_step)
from .pipeline import PipelineConfig, PipelineReport, cuts_from_series, run_pipeline
from .sampling import (GenerationReport, GenerationRequest, SamplingParams,
                       generate, nucleus_sample, window_slide)
from .tokenizer import VOCAB, Vocabulary, decode, encode, transpose

__version__ = "0.1.0"
