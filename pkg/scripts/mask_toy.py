"""Occlusion-heavy interpolation toy (4-8 px motion) with and without the mask network."""
from _common import configure, parser, printer, report

from toflow.experiments import MaskToyConfig, run_mask_toy

if __name__ == "__main__":
    args = parser(__doc__, MaskToyConfig()).parse_args()
    res = report(run_mask_toy(configure(MaskToyConfig(), args), log=printer(args)), args)
    print(f"mask - no_mask          = {res['mask'] - res['no_mask']:+.2f} dB")
    print(f"same, occluded pixels   = {res['mask_occluded'] - res['no_mask_occluded']:+.2f} dB")
