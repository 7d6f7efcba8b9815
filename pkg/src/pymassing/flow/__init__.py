from .realnvp import FlowModel, FlowSpec, flow_for, forward, inverse, layer_log_dets, load_flow, log_prob, save_flow, train_flow
