"""Supervised flow pre-training on 32x32 synthetic clips; reports held-out end-point error."""
from _common import configure, parser, printer, report

from toflow.experiments import FlowToyConfig, run_flow_toy

if __name__ == "__main__":
    args = parser(__doc__, FlowToyConfig()).parse_args()
    report(run_flow_toy(configure(FlowToyConfig(), args), log=printer(args)), args)
