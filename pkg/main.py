# -*- coding: utf-8 -*-
"""
chip2app command line. Exit codes: 0 success/accept/compliant,
2 verification, negotiation or audit rejection, 1 usage, IO or parse error.
"""

import contextlib
import sys
import time
from pathlib import Path
from typing import Callable, List, Optional

import click

from compact_cert import (
    BASELINE_HEADER,
    armor,
    dearmor,
    decode_baseline,
    decode_compact,
    encode_baseline,
    encode_compact,
    size_report,
)
from chip_auth import run_demo
from config import DEFAULT_STORE, DEVICE_CERT_DAYS, HEALTH_ALPHA, KEYGEN_ALPHA, STORE_PASSPHRASE, configure_logging
from entropy import RandomSource, health_gate
from errors import CaRefusal, Chip2AppError, ModeMismatch
from integrity import (
    BootVerdict,
    FirmwareManifest,
    boot_device,
    issue_firmware_signer,
    load_signer,
    save_signer,
    sign_firmware,
)
from keystore import identity_from_element, load_element, provision_device, save_element
from pki import (
    CertificateAuthority,
    Csr,
    Rejection,
    RevocationList,
    ca_issue,
    certificate_pem,
    first_available,
    generate_csr,
    issue_signing_identity,
    load_ca,
    load_certificates,
    new_crl,
    open_or_create,
    ra_review,
    revoke,
    save_ca,
    verify_chain,
)
from suite_registry import (
    REGISTRY,
    HybridCiphertext,
    Mode,
    Role,
    generate_hybrid_keypair,
    generate_signing_key,
    hybrid_decrypt,
    hybrid_encrypt,
    hybrid_private_from_pem,
    hybrid_public_from_pem,
)
from tls_policy import (
    STANDARD_PREFERENCE,
    ServerConfigInput,
    audit_config,
    build_profile,
    negotiate,
    parse_server_config,
)

MODES = click.Choice([m.value for m in Mode])
CLASSES = click.Choice(["standard", "constrained"])


class Runtime:
    """Per-invocation clock and random source"""

    def __init__(self, now: int, source: RandomSource):
        self.now = now
        self.source = source


pass_runtime = click.make_pass_decorator(Runtime)


class Chip2AppGroup(click.Group):
    """Maps domain, IO and usage errors to exit code 1"""

    def parse_args(self, ctx, args):
        try:
            return super().parse_args(ctx, args)
        except click.UsageError as e:
            e.exit_code = 1
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = 1
            raise
        except Chip2AppError as e:
            raise click.ClickException(f"{e.code}: {e}")
        except (OSError, ValueError) as e:
            raise click.ClickException(str(e))


def _reject(ctx: click.Context, line: str):
    click.echo(line)
    ctx.exit(2)


def _hex_bytes(ctx, param, value):
    if value is None:
        return None
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise click.BadParameter(f"{value!r} is not hex")


@click.group(cls=Chip2AppGroup)
@click.option("--now", type=int, default=None, help="Clock override, epoch seconds")
@click.option("--seed", default=None, callback=_hex_bytes, help="Hex seed for the seeded-deterministic random source")
@click.option("--log-level", default=None, help="Log level for stderr (default CHIP2APP_LOG_LEVEL)")
@click.pass_context
def cli(ctx, now, seed, log_level):
    """chip2app - device security lifecycle toolkit"""
    configure_logging(log_level)
    clock: Optional[Callable[[], int]] = ctx.obj.get("clock") if isinstance(ctx.obj, dict) else None
    if now is None:
        now = int(clock()) if clock else int(time.time())
    source = RandomSource.seeded(seed) if seed is not None else RandomSource.system()
    ctx.obj = Runtime(now, source)


# ---------- entropy / registry ----------

@cli.command("rng-test")
@click.option("--in", "sample", type=click.File("rb"), required=True, help="Raw bytes to test, - for stdin")
@click.option("--alpha", type=float, default=HEALTH_ALPHA, show_default=True, help="Significance level")
@click.pass_context
def rng_test(ctx, sample, alpha):
    """Run the entropy health gate on raw bytes"""
    report = health_gate(sample.read(), alpha)
    for result in report.test_results:
        click.echo(f"{result.test_name} p={result.p_value:.6f} {'PASS' if result.passed else 'FAIL'}")
    if not report.overall_pass:
        ctx.exit(2)


@cli.command("modes")
@click.option("--list", "list_all", is_flag=True, help="List every (mode, role) entry (default)")
@click.option("--mode", type=MODES, default=None, help="Only this mode")
def modes(list_all, mode):
    """Show the Current/Future algorithm matrices"""
    for entry_mode, role, specs in REGISTRY.entries():
        if mode and entry_mode.value != mode:
            continue
        names = ", ".join(s.parameter_set or s.name if s.available else f"{s.parameter_set or s.name} (not-available)"
                          for s in specs)
        click.echo(f"{entry_mode.value} {role.value}: {names}")


# ---------- hybrid encryption ----------

@cli.group(cls=Chip2AppGroup)
def hybrid():
    """Hybrid public-key encryption"""


@hybrid.command("keygen")
@click.option("--mode", type=MODES, default="current", show_default=True)
@click.option("--private-out", type=click.Path(dir_okay=False), required=True)
@click.option("--public-out", type=click.Path(dir_okay=False), required=True)
@pass_runtime
def hybrid_keygen(rt: Runtime, mode, private_out, public_out):
    """Generate a recipient key pair"""
    private = generate_hybrid_keypair(Mode(mode), rt.source)
    Path(private_out).write_bytes(private.to_pem())
    Path(public_out).write_bytes(private.public.to_pem())
    click.echo(f"{private.algorithm} public {private.public.key.hex()}")


@hybrid.command("encrypt")
@click.option("--mode", type=MODES, default="current", show_default=True)
@click.option("--key", type=click.Path(exists=True, dir_okay=False), required=True, help="Recipient public key")
@click.option("--in", "in_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@pass_runtime
def hybrid_encrypt_cmd(rt: Runtime, mode, key, in_file, out):
    """Encrypt a file to a recipient"""
    public = hybrid_public_from_pem(Path(key).read_bytes())
    plaintext = Path(in_file).read_bytes()
    ct = hybrid_encrypt(public, plaintext, Mode(mode), rt.source)
    Path(out).write_text(armor("HYBRID CIPHERTEXT", ct.to_bytes()))
    click.echo(f"encrypted {len(plaintext)} bytes")


@hybrid.command("decrypt")
@click.option("--mode", type=MODES, default=None, help="Expected mode (default: the ciphertext's)")
@click.option("--key", type=click.Path(exists=True, dir_okay=False), required=True, help="Recipient private key")
@click.option("--in", "in_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def hybrid_decrypt_cmd(mode, key, in_file, out):
    """Decrypt a hybrid ciphertext"""
    private = hybrid_private_from_pem(Path(key).read_bytes())
    ct = HybridCiphertext.from_bytes(dearmor("HYBRID CIPHERTEXT", Path(in_file).read_text()))
    if mode is not None and Mode(ct.mode) is not Mode(mode):
        raise ModeMismatch(f"ciphertext is {Mode(ct.mode).value}-mode, expected {mode}")
    plaintext = hybrid_decrypt(private, ct)
    Path(out).write_bytes(plaintext)
    click.echo(f"decrypted {len(plaintext)} bytes")


# ---------- CA / provisioning ----------

@cli.group(cls=Chip2AppGroup)
def ca():
    """Certificate authority directories"""


@ca.command("init")
@click.option("--ca", "ca_dir", type=click.Path(file_okay=False), required=True)
@click.option("--mode", type=MODES, default="current", show_default=True)
@click.option("--name", default="chip2app-root", show_default=True)
@pass_runtime
def ca_init(rt: Runtime, ca_dir, mode, name):
    """Create a root CA in a directory, or open the existing one"""
    authority = open_or_create(ca_dir, rt.source, rt.now, Mode(mode), name)
    click.echo(f"ca {authority.name} {authority.key.algorithm} depth={authority.depth}")


def _open_ca(rt: Runtime, ca_dir: str, mode: str = "current") -> CertificateAuthority:
    return open_or_create(ca_dir, rt.source, rt.now, Mode(mode))


@cli.command("provision")
@click.option("--mode", type=MODES, default="current", show_default=True)
@click.option("--ca", "ca_dir", type=click.Path(file_okay=False), required=True)
@click.option("--store", type=click.Path(dir_okay=False), default=DEFAULT_STORE, required=DEFAULT_STORE is None)
@click.option("--subject", default=None, help="Certificate subject (default device-<uuid>)")
@pass_runtime
def provision(rt: Runtime, mode, ca_dir, store, subject):
    """Provision a simulated secure element and store it encrypted"""
    authority = _open_ca(rt, ca_dir, mode)
    identity = provision_device(Mode(mode), authority, rt.source, rt.now, subject_id=subject)
    save_element(identity.element, store, rt.source, STORE_PASSPHRASE)
    save_ca(authority, ca_dir)
    click.echo(f"device {identity.device_uuid}")
    click.echo(f"root_public_key {identity.root_public_key.hex()}")
    click.echo(f"certificate serial={identity.device_certificate.serial.hex()}")


@cli.group(cls=Chip2AppGroup)
def device():
    """Inspect a stored secure element"""


@device.command("show")
@click.option("--store", type=click.Path(exists=True, dir_okay=False), default=DEFAULT_STORE,
              required=DEFAULT_STORE is None)
def device_show(store):
    """Print public identity and OTP slot states"""
    element = load_element(store, STORE_PASSPHRASE)
    click.echo(f"device {element.device_uuid}")
    click.echo(f"mode {element.mode.value if element.mode else 'unprovisioned'}")
    if element.root_handle is not None:
        identity = identity_from_element(element)
        click.echo(f"root_public_key {identity.root_public_key.hex()}")
        click.echo(f"subject {identity.device_certificate.subject_id}")
        click.echo(f"issuer {identity.device_certificate.issuer_id}")
    for slot in element.slots:
        size = f" {len(slot.data)} bytes" if slot.data is not None else ""
        click.echo(f"slot {slot.index} {slot.state.value}{size}")
    click.echo(f"boot_version {element.boot_version or 'none'}")


# ---------- certificate lifecycle ----------

@cli.command("csr")
@click.option("--subject", required=True)
@click.option("--mode", type=MODES, default="current", show_default=True)
@click.option("--key-out", type=click.Path(dir_okay=False), required=True, help="Where to write the new private key")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@pass_runtime
def csr_cmd(rt: Runtime, subject, mode, key_out, out):
    """Generate a key pair and a self-signed certificate request"""
    key = generate_signing_key(first_available(Mode(mode), Role.SIGNATURE), rt.source)
    request = generate_csr(subject, key)
    Path(key_out).write_bytes(key.to_pem())
    Path(out).write_text(request.to_pem())
    click.echo(f"csr {subject} {key.algorithm}")


@cli.command("issue")
@click.option("--csr", "csr_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--ca", "ca_dir", type=click.Path(file_okay=False), required=True)
@click.option("--days", type=int, default=DEVICE_CERT_DAYS, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Certificate followed by its chain")
@pass_runtime
@click.pass_context
def issue(ctx, rt: Runtime, csr_file, ca_dir, days, out):
    """RA review then CA issuance of a certificate request"""
    authority = _open_ca(rt, ca_dir)
    request = Csr.from_pem(Path(csr_file).read_text())
    approval = ra_review(request, authority.ra.policy, authority.ra, rt.now)
    if isinstance(approval, Rejection):
        _reject(ctx, f"REJECT {approval.reason}")
    try:
        cert = ca_issue(approval, authority, days, rt.now)
    except CaRefusal as e:
        _reject(ctx, f"REFUSE {e.code}")
    save_ca(authority, ca_dir)
    Path(out).write_text(certificate_pem([cert] + authority.leaf_chain))
    click.echo(f"issued {cert.subject_id} serial={cert.serial.hex()}")


@cli.command("verify")
@click.option("--cert", "cert_file", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Leaf certificate followed by its chain")
@click.option("--ca", "ca_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--trust-root", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--crl", "crl_file", type=click.Path(exists=True, dir_okay=False), default=None)
@pass_runtime
@click.pass_context
def verify(ctx, rt: Runtime, cert_file, ca_dir, trust_root, crl_file):
    """Verify a certificate chain against a trust root"""
    certs = load_certificates(Path(cert_file).read_text())
    crl = RevocationList.from_pem(Path(crl_file).read_text()) if crl_file else None
    if trust_root:
        root = load_certificates(Path(trust_root).read_text())[0]
    elif ca_dir:
        authority = load_ca(ca_dir, rt.source)
        root = authority.trust_root
        crl = crl or authority.crl
    else:
        raise click.UsageError("one of --ca or --trust-root is required")
    verdict = verify_chain(certs[0], certs[1:], root, rt.now, crl)
    if not verdict.accepted:
        _reject(ctx, f"REJECT {verdict.reason}")
    click.echo("ACCEPT")


@cli.command("revoke")
@click.option("--cert", "cert_file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--serial", default=None, callback=_hex_bytes, help="Serial number in hex")
@click.option("--ca", "ca_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the CRL here")
@pass_runtime
def revoke_cmd(rt: Runtime, cert_file, serial, ca_dir, out):
    """Add a certificate serial to the CA's revocation list"""
    if bool(cert_file) == bool(serial):
        raise click.UsageError("give exactly one of --cert or --serial")
    authority = load_ca(ca_dir, rt.source)
    target = load_certificates(Path(cert_file).read_text())[0].serial if cert_file else serial
    authority.crl = revoke(target, authority.crl or new_crl(authority, rt.now), authority, rt.now)
    save_ca(authority, ca_dir)
    if out:
        Path(out).write_text(authority.crl.to_pem())
    click.echo(f"revoked {target.hex()} ({len(authority.crl.revoked_serials)} on list)")


# ---------- compact certificates ----------

@cli.group(cls=Chip2AppGroup)
def cert():
    """Compact and baseline certificate encodings"""


def _read_certificate(path: str):
    data = Path(path).read_bytes()
    if data.startswith(BASELINE_HEADER.encode()):
        return decode_baseline(data)
    if data.lstrip().startswith(b"-----BEGIN"):
        return load_certificates(data.decode("ascii", errors="replace"))[0]
    return decode_compact(data)


@cert.command("encode")
@click.option("--in", "in_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--format", "fmt", type=click.Choice(["compact", "baseline"]), default="compact", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def cert_encode(in_file, fmt, out):
    """Re-encode a certificate as compact CBOR or the text baseline"""
    record = _read_certificate(in_file)
    data = encode_compact(record) if fmt == "compact" else encode_baseline(record)
    Path(out).write_bytes(data)
    click.echo(f"{fmt} {len(data)} bytes")


@cert.command("decode")
@click.option("--in", "in_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write it as a text envelope")
def cert_decode(in_file, out):
    """Print the fields of a certificate in any supported encoding"""
    record = _read_certificate(in_file)
    if out:
        Path(out).write_text(certificate_pem([record]))
    for name, value in record.model_dump().items():
        if isinstance(value, bytes):
            value = value.hex()
        elif isinstance(value, dict):
            value = ",".join(f"{k}={v.hex()}" for k, v in sorted(value.items())) or "-"
        click.echo(f"{name}: {value}")


@cert.command("size")
@click.option("--in", "in_file", type=click.Path(exists=True, dir_okay=False), required=True)
def cert_size(in_file):
    """Compare compact and baseline encoding sizes"""
    report = size_report(_read_certificate(in_file))
    click.echo(f"compact={report.compact_len} baseline={report.baseline_len} ratio={report.ratio:.4f}")


# ---------- firmware ----------

@cli.group(cls=Chip2AppGroup)
def fw():
    """Firmware signing and secure boot"""


@fw.command("signer")
@click.option("--ca", "ca_dir", type=click.Path(file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Signer directory")
@click.option("--name", default="firmware-signer", show_default=True)
@pass_runtime
def fw_signer(rt: Runtime, ca_dir, out, name):
    """Issue a firmware signing identity from the CA"""
    authority = _open_ca(rt, ca_dir)
    signer = issue_firmware_signer(authority, rt.source, rt.now, name)
    save_ca(authority, ca_dir)
    save_signer(signer, out)
    click.echo(f"signer {signer.certificate.subject_id} serial={signer.certificate.serial.hex()}")


@fw.command("sign")
@click.option("--image", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--version", "fw_version", required=True, help="Semantic version MAJOR.MINOR.PATCH")
@click.option("--model", default="c2a-device", show_default=True)
@click.option("--signer", "signer_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--mode", type=MODES, default="current", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@pass_runtime
def fw_sign(rt: Runtime, image, fw_version, model, signer_dir, mode, out):
    """Sign a firmware image into a manifest"""
    manifest = sign_firmware(Path(image).read_bytes(), fw_version, model, load_signer(signer_dir),
                             Mode(mode), rt.now)
    Path(out).write_text(manifest.to_pem())
    click.echo(f"manifest {model} {fw_version} {manifest.digest_alg} {manifest.image_digest.hex()}")


@fw.command("verify")
@click.option("--image", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--store", type=click.Path(exists=True, dir_okay=False), default=DEFAULT_STORE,
              required=DEFAULT_STORE is None)
@pass_runtime
@click.pass_context
def fw_verify(ctx, rt: Runtime, image, manifest, store):
    """Secure-boot an image against the trust root in the element's OTP"""
    element = load_element(store, STORE_PASSPHRASE)
    try:
        parsed = FirmwareManifest.from_pem(Path(manifest).read_text())
    except Chip2AppError:
        parsed = None
    verdict = (boot_device(element, Path(image).read_bytes(), parsed, rt.now) if parsed is not None
               else BootVerdict.halt("malformed-manifest"))
    if not verdict.boot:
        _reject(ctx, f"HALT {verdict.reason}")
    save_element(element, store, rt.source, STORE_PASSPHRASE)
    click.echo("BOOT")


# ---------- chip authentication ----------

@cli.group(cls=Chip2AppGroup)
def chipauth():
    """Chip authentication protocol"""


@chipauth.command("demo")
@click.option("--mode", type=MODES, default="current", show_default=True)
@click.option("--adversary", type=click.Choice(["clone", "replay"]), default=None)
@pass_runtime
@click.pass_context
def chipauth_demo(ctx, rt: Runtime, mode, adversary):
    """Run a full chip/reader exchange in-process"""
    result = run_demo(Mode(mode), rt.source, rt.now, adversary)
    for index, message in enumerate(result.transcript):
        click.echo(f"message {index} {message}")
    if not result.authenticated:
        _reject(ctx, f"FAILED {result.failure_reason}")
    click.echo("AUTHENTICATED")


# ---------- TLS policy ----------

@cli.group(cls=Chip2AppGroup)
def tls():
    """TLS 1.3 cipher-suite policy"""


@tls.command("negotiate")
@click.option("--offer", required=True, help="Comma-separated client suite list")
@click.option("--class", "device_class", type=CLASSES, default="standard", show_default=True)
@click.option("--mode", type=MODES, default="current", show_default=True)
@click.pass_context
def tls_negotiate(ctx, offer, device_class, mode):
    """Select a suite by server preference"""
    outcome = negotiate([s.strip() for s in offer.split(",") if s.strip()], build_profile(device_class, Mode(mode)))
    if outcome.terminated:
        _reject(ctx, "TERMINATE")
    click.echo(outcome.selected)


@tls.command("audit")
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--class", "device_class", type=CLASSES, default="standard", show_default=True)
@click.option("--mode", type=MODES, default="current", show_default=True)
@click.option("--crl", "crl_file", type=click.Path(exists=True, dir_okay=False), default=None)
@pass_runtime
@click.pass_context
def tls_audit(ctx, rt: Runtime, config_file, device_class, mode, crl_file):
    """Audit a server configuration against the rule catalog"""
    crl = RevocationList.from_pem(Path(crl_file).read_text()) if crl_file else None
    report = audit_config(parse_server_config(config_file), build_profile(device_class, Mode(mode)), rt.now, crl)
    for line in report.lines():
        click.echo(line)
    if not report.compliant:
        ctx.exit(2)


# ---------- end to end ----------

@cli.group(cls=Chip2AppGroup)
def scenario():
    """End-to-end walkthroughs"""


@scenario.command("full")
@click.option("--mode", type=MODES, default="current", show_default=True)
@pass_runtime
@click.pass_context
def scenario_full(ctx, rt: Runtime, mode):
    """Provision, issue, sign firmware, boot, authenticate a chip, audit TLS"""

    mode = Mode(mode)
    ok = True

    report = health_gate(rt.source.read(64), KEYGEN_ALPHA)
    click.echo(f"entropy {'PASS' if report.overall_pass else 'FAIL'}")
    ok &= report.overall_pass

    authority = CertificateAuthority.create_root("chip2app-root", mode, rt.source, rt.now)
    click.echo(f"ca {authority.name} {authority.key.algorithm}")

    identity = provision_device(mode, authority, rt.source, rt.now)
    click.echo(f"provision {identity.device_uuid} root_public_key={identity.root_public_key.hex()}")

    verdict = verify_chain(identity.device_certificate, identity.ca_chain, identity.trust_root, rt.now)
    click.echo(f"verify {verdict.describe()}")
    ok &= verdict.accepted

    sizes = size_report(identity.device_certificate)
    click.echo(f"cert compact={sizes.compact_len} baseline={sizes.baseline_len} ratio={sizes.ratio:.4f}")

    signer = issue_firmware_signer(authority, rt.source, rt.now)
    image = bytes(range(256)) * 16
    manifest = sign_firmware(image, "1.0.0", "c2a-device", signer, mode, rt.now)
    boot = boot_device(identity.element, image, manifest, rt.now)
    click.echo(f"boot {boot.describe()}")
    ok &= boot.boot

    tampered = bytearray(image)
    tampered[0] ^= 0x01
    halt = boot_device(identity.element, bytes(tampered), manifest, rt.now)
    click.echo(f"boot-tampered {halt.describe()}")
    ok &= not halt.boot

    for adversary in (None, "clone", "replay"):
        result = run_demo(mode, rt.source, rt.now, adversary)
        label = adversary or "honest"
        outcome = "authenticated" if result.authenticated else f"failed {result.failure_reason}"
        click.echo(f"chipauth {label} {outcome}")
        ok &= result.authenticated == (adversary is None)

    server_key, server_cert = issue_signing_identity(authority, rt.source, rt.now, "server.c2a.example")
    config = ServerConfigInput(tls_versions=frozenset({"1.3"}), offered_suites=list(STANDARD_PREFERENCE))
    audit = audit_config(config, build_profile("standard", mode), rt.now,
                         certificates=[server_cert] + authority.leaf_chain)
    for line in audit.lines():
        click.echo(f"tls {line}")
    ok &= audit.compliant

    if not ok:
        _reject(ctx, "SCENARIO FAIL")
    click.echo("SCENARIO PASS")


def run(argv: Optional[List[str]] = None, clock: Optional[Callable[[], int]] = None,
        stdin=None, stdout=None, stderr=None) -> int:
    """Entry point with injectable clock and streams; returns the exit code"""
    with contextlib.ExitStack() as stack:
        if stdin is not None:
            stack.enter_context(_swap("stdin", stdin))
        if stdout is not None:
            stack.enter_context(contextlib.redirect_stdout(stdout))
        if stderr is not None:
            stack.enter_context(contextlib.redirect_stderr(stderr))
        try:
            rv = cli.main(args=argv, prog_name="chip2app", standalone_mode=False, obj={"clock": clock})
        except click.ClickException as e:
            e.show()
            return 1
        except click.Abort:
            click.echo("Aborted!", err=True)
            return 1
        except Chip2AppError as e:
            click.echo(f"Error: {e.code}: {e}", err=True)
            return 1
        except (OSError, ValueError) as e:
            click.echo(f"Error: {e}", err=True)
            return 1
        return rv if isinstance(rv, int) else 0


@contextlib.contextmanager
def _swap(name: str, stream):
    saved = getattr(sys, name)
    setattr(sys, name, stream)
    try:
        yield
    finally:
        setattr(sys, name, saved)


if __name__ == "__main__":
    sys.exit(run())
