"""Triangle interpolation toy: joint training vs ground-truth-flow averaging vs frozen flow."""
from _common import configure, parser, printer, report

from toflow.experiments import InterpToyConfig, run_interp_toy

if __name__ == "__main__":
    args = parser(__doc__, InterpToyConfig()).parse_args()
    res = report(run_interp_toy(configure(InterpToyConfig(), args), log=printer(args)), args)
    print(f"joint - gt_warp_average = {res['joint'] - res['gt_warp_average']:+.2f} dB")
    print(f"joint - fixed_flow      = {res['joint'] - res['fixed_flow']:+.2f} dB")
