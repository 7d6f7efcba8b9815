from .generate import generate, load_dataset, load_manifest
from .ops import far_histogram, length_histogram, rooms_per_floor_histogram, split
from .records import DatasetManifest, SequenceRecord
from .sequence import DesignSequence, from_record, replay, subsample, validate_sequence
