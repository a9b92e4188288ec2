"""Box-noise septuplet denoising toy."""
from _common import configure, parser, printer, report

from toflow.experiments import DenoiseToyConfig, run_denoise_toy

if __name__ == "__main__":
    args = parser(__doc__, DenoiseToyConfig()).parse_args()
    res = report(run_denoise_toy(configure(DenoiseToyConfig(), args), log=printer(args)), args)
    print(f"joint - noisy_input     = {res['joint'] - res['noisy_input']:+.2f} dB")
    print(f"joint - gt_warp_average = {res['joint'] - res['gt_warp_average']:+.2f} dB")
