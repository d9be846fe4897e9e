"""Uncertainty-aware implicit neural representations of steady vector fields."""
from .field import (AnalyticFieldKind, DomainSpec, GridVectorField, ScalarField, denormalize_coords,
                    from_function, generate_analytic, grid_nodes, normalize_coords, sample_interpolated)
from .flow import (CriticalPoint, Streamline, StreamlineBundle, aggregate_streamlines, classify_critical_point,
                   detect_critical_points, rk4_step, trace_realizations, trace_streamline, variability_field)
from .io import (RunConfig, export_streamline_bundles, load_checkpoint, load_raw_field, load_streamline_bundles,
                 save_checkpoint, save_raw_field)
from .metrics import chamfer, critical_point_rmse, hausdorff, psnr, rmse
from .network import AdamState, NetworkConfig, adam_step, backward, forward, init_parameters, predict
from .training import TrainConfig, TrainReport, train_ensemble, train_single_model
from .uq import (FieldRealizationSet, NeuralSampler, error_field, mean_field, reconstruct,
                 sample_realizations_ensemble, sample_realizations_mcdropout, uncertainty_field)

__version__ = "0.1.0"
