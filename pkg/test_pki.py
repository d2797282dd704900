# -*- coding: utf-8 -*-

import pytest

from config import MAX_END_ENTITY_DAYS, SECONDS_PER_DAY
from entropy import RandomSource
from errors import AlgorithmNotAvailable, CaRefusal, IssuerMismatch, StoreError
from pki import (
    ApprovalToken,
    CertificateAuthority,
    Csr,
    IssuancePolicy,
    Rejection,
    RevocationList,
    SignedDataBundle,
    build_signed_bundle,
    ca_issue,
    certificate_pem,
    first_available,
    generate_csr,
    issue_signing_identity,
    load_ca,
    load_certificates,
    new_crl,
    open_or_create,
    passive_authenticate,
    ra_review,
    revoke,
    save_ca,
    sign_certificate,
    verify_chain,
)
from suite_registry import Mode, Role, generate_signing_key

DAY = SECONDS_PER_DAY


def _issue(ca, source, now, name="device-0001", days=30, algorithm="Ed25519", extensions=None):
    key = generate_signing_key(algorithm, source)
    token = ra_review(generate_csr(name, key, extensions), ca.ra.policy, ca.ra, now)
    assert isinstance(token, ApprovalToken)
    return key, ca_issue(token, ca, days, now)


class TestRegistration:
    def test_csr_encoding(self, source):
        csr = generate_csr("device-1", generate_signing_key("Ed448", source), {"model": b"x1"})
        assert Csr.from_bytes(csr.to_bytes()) == csr
        assert Csr.from_pem(csr.to_pem()) == csr

    def test_approval(self, root_ca, source, now):
        csr = generate_csr("device-1", generate_signing_key("Ed25519", source))
        token = ra_review(csr, root_ca.ra.policy, root_ca.ra, now)
        assert isinstance(token, ApprovalToken)
        assert token.csr == csr
        assert token.ra_id == root_ca.ra.name

    def test_bad_proof_of_possession(self, root_ca, source, now):
        csr = generate_csr("device-1", generate_signing_key("Ed25519", source))
        forged = csr.model_copy(update={"subject_id": "device-2"})
        result = ra_review(forged, root_ca.ra.policy, root_ca.ra, now)
        assert result == Rejection(reason="pop-invalid")

    def test_name_policy(self, root_ca, source, now):
        policy = IssuancePolicy(name_pattern=r"device-\d+")
        csr = generate_csr("printer", generate_signing_key("Ed25519", source))
        assert ra_review(csr, policy, root_ca.ra, now).reason == "name-not-permitted"

    def test_algorithm_checked_first(self, root_ca, source, now):
        policy = IssuancePolicy(name_pattern="nobody", mode=Mode.FUTURE)
        csr = generate_csr("device-1", generate_signing_key("Ed25519", source))
        forged = csr.model_copy(update={"proof_of_possession": b"\x00" * 64})
        assert ra_review(forged, policy, root_ca.ra, now).reason == "alg-not-permitted"

    def test_pop_checked_before_name(self, root_ca, source, now):
        policy = IssuancePolicy(name_pattern="nobody")
        csr = generate_csr("device-1", generate_signing_key("Ed25519", source))
        forged = csr.model_copy(update={"proof_of_possession": b"\x00" * 64})
        assert ra_review(forged, policy, root_ca.ra, now).reason == "pop-invalid"


class TestIssuance:
    def test_issued_certificate_verifies(self, root_ca, source, now):
        key, cert = _issue(root_ca, source, now)
        assert cert.public_key == key.public_key
        assert cert.issuer_id == root_ca.name
        assert cert.not_after == now + 30 * DAY
        assert verify_chain(cert, root_ca.leaf_chain, root_ca.trust_root, now).accepted

    @pytest.mark.parametrize("mode", list(Mode))
    def test_pipeline_per_mode(self, source, now, mode):
        try:
            ca = CertificateAuthority.create_root(f"{mode.value}-root", mode, source, now)
        except AlgorithmNotAvailable:
            pytest.skip(f"no {mode.value}-mode signature implementation")
        _, cert = _issue(ca, source, now, days=MAX_END_ENTITY_DAYS,
                         algorithm=first_available(mode, Role.SIGNATURE))
        assert verify_chain(cert, [], ca.trust_root, now).accepted

    def test_unique_serials(self, root_ca, source, now):
        serials = {_issue(root_ca, source, now, name=f"device-{i}")[1].serial for i in range(10)}
        assert len(serials) == 10

    def test_validity_cap(self, root_ca, source, now):
        token = ra_review(generate_csr("d", generate_signing_key("Ed25519", source)),
                          root_ca.ra.policy, root_ca.ra, now)
        with pytest.raises(CaRefusal) as exc:
            ca_issue(token, root_ca, MAX_END_ENTITY_DAYS + 1, now)
        assert exc.value.code == "validity-exceeds-max"
        assert ca_issue(token, root_ca, MAX_END_ENTITY_DAYS, now).lifetime == MAX_END_ENTITY_DAYS * DAY

    def test_zero_validity(self, root_ca, source, now):
        token = ra_review(generate_csr("d", generate_signing_key("Ed25519", source)),
                          root_ca.ra.policy, root_ca.ra, now)
        with pytest.raises(CaRefusal) as exc:
            ca_issue(token, root_ca, 0, now)
        assert exc.value.code == "invalid-validity"

    def test_expired_token(self, root_ca, source, now):
        token = ra_review(generate_csr("d", generate_signing_key("Ed25519", source)),
                          root_ca.ra.policy, root_ca.ra, now)
        with pytest.raises(CaRefusal) as exc:
            ca_issue(token, root_ca, 30, token.expires_at + 1)
        assert exc.value.code == "token-expired"

    def test_foreign_token(self, root_ca, source, now):
        other = CertificateAuthority.create_root("other-root", Mode.CURRENT, source, now)
        token = ra_review(generate_csr("d", generate_signing_key("Ed25519", source)),
                          other.ra.policy, other.ra, now)
        with pytest.raises(CaRefusal) as exc:
            ca_issue(token, root_ca, 30, now)
        assert exc.value.code == "invalid-token"

    def test_tampered_token(self, root_ca, source, now):
        token = ra_review(generate_csr("d", generate_signing_key("Ed25519", source)),
                          root_ca.ra.policy, root_ca.ra, now)
        with pytest.raises(CaRefusal):
            ca_issue(token.model_copy(update={"expires_at": token.expires_at + 10 * DAY}), root_ca, 30, now)

    def test_ca_flag_not_grantable(self, root_ca, source, now):
        _, cert = _issue(root_ca, source, now, extensions={"ca": b"\x01", "model": b"x1"})
        assert not cert.is_ca
        assert cert.extensions == {"model": b"x1"}

    def test_leaf_clamped_to_issuer(self, source, now):
        short = CertificateAuthority.create_root("short", Mode.CURRENT, source, now, days=10)
        _, cert = _issue(short, source, now, days=MAX_END_ENTITY_DAYS)
        assert cert.not_after == short.certificate.not_after

    def test_signing_identity(self, root_ca, source, now):
        key, cert = issue_signing_identity(root_ca, source, now, "fw-signer")
        assert cert.subject_id == "fw-signer"
        assert cert.public_key == key.public_key

    def test_deterministic_under_seed(self, now):
        def build():
            src = RandomSource.seeded(b"det")
            ca = CertificateAuthority.create_root("r", Mode.CURRENT, src, now)
            return _issue(ca, src, now)[1]
        assert build() == build()


class TestChainVerification:
    def test_validity_bounds_inclusive(self, root_ca, source, now):
        _, cert = _issue(root_ca, source, now)
        root = root_ca.trust_root
        assert verify_chain(cert, [], root, cert.not_before).accepted
        assert verify_chain(cert, [], root, cert.not_after).accepted
        assert verify_chain(cert, [], root, cert.not_after + 1).reason == "expired"
        assert verify_chain(cert, [], root, cert.not_before - 1).reason == "not-yet-valid"

    def test_untrusted_root(self, root_ca, source, now):
        _, cert = _issue(root_ca, source, now)
        other = CertificateAuthority.create_root(root_ca.name, Mode.CURRENT, source, now)
        assert verify_chain(cert, [], other.trust_root, now).reason == "untrusted-chain"

    def test_tampered_leaf(self, root_ca, source, now):
        _, cert = _issue(root_ca, source, now)
        forged = cert.model_copy(update={"not_after": cert.not_after + DAY})
        assert verify_chain(forged, [], root_ca.trust_root, now).reason == "untrusted-chain"

    def test_subordinate_path(self, root_ca, source, now):
        sub = root_ca.create_subordinate("issuing-ca", now)
        _, cert = _issue(sub, source, now)
        assert verify_chain(cert, sub.leaf_chain, sub.trust_root, now).accepted
        # trailing root copy tolerated
        assert verify_chain(cert, sub.issuer_chain, sub.trust_root, now).accepted
        assert verify_chain(cert, [], sub.trust_root, now).reason == "untrusted-chain"

    def test_depth_limits(self, root_ca, source, now):
        ca = root_ca
        for i in range(3):
            ca = ca.create_subordinate(f"level-{i + 1}", now)
        _, cert = _issue(ca, source, now)
        assert verify_chain(cert, ca.leaf_chain, ca.trust_root, now).accepted
        too_long = [ca.certificate] + ca.leaf_chain
        assert verify_chain(cert, too_long, ca.trust_root, now).reason == "chain-too-long"
        with pytest.raises(CaRefusal) as exc:
            ca.create_subordinate("level-4", now)
        assert exc.value.code == "depth-exceeded"

    def test_mixed_algorithms(self, root_ca, source, now):
        sub = root_ca.create_subordinate("ed448-ca", now, algorithm="Ed448")
        _, cert = _issue(sub, source, now, algorithm="Ed448")
        assert verify_chain(cert, sub.leaf_chain, sub.trust_root, now).reason == "alg-mismatch"

    def test_leaf_cannot_issue(self, root_ca, source, now):
        leaf_key, leaf = _issue(root_ca, source, now)
        grandchild = sign_certificate(leaf_key, leaf.subject_id, "rogue", "Ed25519", leaf_key.public_key,
                                      now, now + DAY, b"\x01" * 16)
        assert verify_chain(grandchild, [leaf], root_ca.trust_root, now).reason == "not-a-ca"

    def test_certificate_file(self, root_ca, source, now):
        _, cert = _issue(root_ca, source, now)
        assert load_certificates(certificate_pem([cert, root_ca.certificate])) == [cert, root_ca.certificate]


class TestRevocation:
    def test_revoked_leaf_rejected(self, root_ca, source, now):
        _, cert = _issue(root_ca, source, now)
        assert verify_chain(cert, [], root_ca.trust_root, now, root_ca.crl).accepted
        crl = revoke(cert.serial, root_ca.crl, root_ca, now)
        assert cert.serial in crl.revoked_serials
        assert verify_chain(cert, [], root_ca.trust_root, now, crl).reason == "revoked"

    def test_revocation_is_monotonic(self, root_ca, source, now):
        _, a = _issue(root_ca, source, now)
        _, b = _issue(root_ca, source, now)
        first = revoke(a.serial, root_ca.crl, root_ca, now)
        second = revoke(b.serial, first, root_ca, now)
        assert second.issued_at > first.issued_at > root_ca.crl.issued_at
        assert set(second.revoked_serials) == {a.serial, b.serial}
        assert list(second.revoked_serials) == sorted(second.revoked_serials)

    def test_foreign_list(self, root_ca, source, now):
        other = CertificateAuthority.create_root("other-root", Mode.CURRENT, source, now)
        with pytest.raises(IssuerMismatch):
            revoke(b"\x00" * 16, new_crl(other, now), root_ca, now)

    def test_forged_list(self, root_ca, source, now):
        _, cert = _issue(root_ca, source, now)
        forged = root_ca.crl.model_copy(update={"revoked_serials": (cert.serial,)})
        assert not forged.verify(root_ca.certificate)
        assert verify_chain(cert, [], root_ca.trust_root, now, forged).reason == "crl-invalid"

    def test_list_encoding(self, root_ca, now):
        crl = revoke(b"\x02" * 16, root_ca.crl, root_ca, now)
        assert RevocationList.from_pem(crl.to_pem()) == crl
        assert RevocationList.from_bytes(crl.to_bytes()).verify(root_ca.certificate)


class TestPassiveAuthentication:
    @pytest.fixture
    def bundle(self, root_ca, source, now):
        ds_key, ds_cert = issue_signing_identity(root_ca, source, now, "document-signer")
        groups = {1: b"holder: A. Example", 2: b"portrait", 14: b"chip key"}
        return build_signed_bundle(groups, ds_key, ds_cert, root_ca.certificate, Mode.CURRENT)

    def test_genuine(self, bundle, root_ca, now):
        assert passive_authenticate(bundle, root_ca.trust_root, now).accepted

    def test_altered_group(self, bundle, root_ca, now):
        altered = bundle.model_copy(update={"data_groups": {**bundle.data_groups, 2: b"other portrait"}})
        verdict = passive_authenticate(altered, root_ca.trust_root, now)
        assert (verdict.reason, verdict.group) == ("digest-mismatch", 2)
        assert verdict.describe() == "reject digest-mismatch group=2"

    def test_altered_digest_table(self, bundle, root_ca, now):
        altered = bundle.model_copy(update={"digests": {**bundle.digests, 1: b"\x00" * 32}})
        assert passive_authenticate(altered, root_ca.trust_root, now).reason == "bad-signature"

    def test_untrusted_signer(self, bundle, source, now):
        other = CertificateAuthority.create_root("other-csca", Mode.CURRENT, source, now)
        assert passive_authenticate(bundle, other.trust_root, now).reason == "untrusted-chain"

    def test_bundle_encoding(self, bundle):
        assert SignedDataBundle.from_bytes(bundle.to_bytes()) == bundle
        assert SignedDataBundle.from_pem(bundle.to_pem()) == bundle


class TestCaDirectory:
    def test_save_and_load(self, root_ca, source, now, tmp_path):
        _issue(root_ca, source, now)
        save_ca(root_ca, tmp_path)
        loaded = load_ca(tmp_path, source)
        assert loaded.certificate == root_ca.certificate
        assert loaded.issued_serials == root_ca.issued_serials
        assert loaded.crl == root_ca.crl
        _, cert = _issue(loaded, source, now)
        assert verify_chain(cert, [], root_ca.trust_root, now).accepted

    def test_open_or_create(self, source, now, tmp_path):
        created = open_or_create(tmp_path / "ca", source, now)
        again = open_or_create(tmp_path / "ca", source, now)
        assert again.certificate == created.certificate

    def test_corrupt_directory(self, root_ca, source, tmp_path):
        save_ca(root_ca, tmp_path)
        (tmp_path / "ca.cert").write_text("not a certificate")
        with pytest.raises(StoreError):
            load_ca(tmp_path, source)
