"""
Imposter Simulator - estimation-driven page deduplication and Rowhammer simulation
against a simulated industrial control system.
"""

__version__ = "0.1.0"

from .dedup import FrameStore, ScanConfig, VpsInstance
from .dram import Dram, DramGeometry, HammerConfig
from .estimator import EstimatorConfig, FrequencyTables, ImposterEstimator, run_imposter_estimation
from .harness import AttackHarness, AttackReport, AttackScenario, TargetSpec
from .ics_model import HistorianLog, StateSpaceModel, build_warehouse_model
from .page_synth import ProtocolProfile, TagTableLayout, layout_from_model, synthesize_page

__all__ = [
    'AttackHarness',
    'AttackReport',
    'AttackScenario',
    'TargetSpec',
    'Dram',
    'DramGeometry',
    'HammerConfig',
    'EstimatorConfig',
    'FrequencyTables',
    'ImposterEstimator',
    'run_imposter_estimation',
    'FrameStore',
    'ScanConfig',
    'VpsInstance',
    'HistorianLog',
    'StateSpaceModel',
    'build_warehouse_model',
    'ProtocolProfile',
    'TagTableLayout',
    'layout_from_model',
    'synthesize_page',
]
