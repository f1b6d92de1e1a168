#include "phenonet/textprep.hpp"

// Embedded copies of the shipped word-list data files. data/stopwords_en.txt
// and data/lemmas_en.txt stay the canonical versions; a unit test pins the
// two representations together.

namespace phenonet {

const char* kBuiltinStopwordText = R"WL(i
me
my
myself
we
our
ours
ourselves
you
your
yours
yourself
yourselves
he
him
his
himself
she
her
hers
herself
it
its
itself
they
them
their
theirs
themselves
what
which
who
whom
this
that
these
those
am
is
are
was
were
be
been
being
have
has
had
having
do
does
did
doing
a
an
the
and
but
if
or
because
as
until
while
of
at
by
for
with
about
against
between
into
through
during
before
after
above
below
to
from
up
down
in
out
on
off
over
under
again
further
then
once
here
there
when
where
why
how
all
any
both
each
few
more
most
other
some
such
no
nor
not
only
own
same
so
than
too
very
s
t
can
will
just
don
should
now
d
ll
m
o
re
ve
y
ain
aren
couldn
didn
doesn
hadn
hasn
haven
isn
ma
mightn
mustn
needn
shan
shouldn
wasn
weren
won
wouldn
)WL";

const char* kBuiltinLemmaText = R"WL(studies	study
studied	study
studying	study
lesions	lesion
patients	patient
notes	note
reports	report
reported	report
reporting	report
findings	finding
symptoms	symptom
diseases	disease
disorders	disorder
diagnoses	diagnosis
diagnosed	diagnose
treatments	treatment
treated	treat
treating	treat
medications	medication
conditions	condition
procedures	procedure
surgeries	surgery
admissions	admission
admitted	admit
discharged	discharge
discharges	discharge
histories	history
allergies	allergy
complaints	complaint
examinations	examination
examined	examine
infections	infection
infected	infect
fevers	fever
pains	pain
aches	ache
doses	dose
tablets	tablet
injections	injection
fractures	fracture
fractured	fracture
wounds	wound
injuries	injury
injured	injure
tests	test
tested	test
testing	test
results	result
resulted	result
values	value
levels	level
rates	rate
pressures	pressure
measurements	measurement
measured	measure
observations	observation
observed	observe
showed	show
shows	show
showing	show
shown	show
revealed	reveal
reveals	reveal
indicated	indicate
indicates	indicate
presented	present
presents	present
presenting	present
denies	deny
denied	deny
complains	complain
complained	complain
improved	improve
improves	improve
improving	improve
worsened	worsen
worsening	worsen
increased	increase
increases	increase
increasing	increase
decreased	decrease
decreases	decrease
decreasing	decrease
elevated	elevate
noted	note
noting	note
continued	continue
continues	continue
continuing	continue
received	receive
receives	receive
receiving	receive
given	give
gave	give
gives	give
taken	take
takes	take
taking	take
took	take
performed	perform
performs	perform
performing	perform
followed	follow
follows	follow
following	follow
required	require
requires	require
requiring	require
recommended	recommend
recommends	recommend
scheduled	schedule
prescribed	prescribe
prescribes	prescribe
administered	administer
monitored	monitor
monitoring	monitor
evaluated	evaluate
evaluations	evaluation
assessed	assess
assessments	assessment
transferred	transfer
transfers	transfer
stabilized	stabilize
resolved	resolve
resolves	resolve
developed	develop
develops	develop
developing	develop
appeared	appear
appears	appear
remained	remain
remains	remain
became	become
becomes	become
children	child
women	woman
men	man
feet	foot
teeth	tooth
criteria	criterion
data	datum
bacteria	bacterium
stenoses	stenosis
emboli	embolus
thrombi	thrombus
nuclei	nucleus
fungi	fungus
vertebrae	vertebra
apneas	apnea
arrhythmias	arrhythmia
seizures	seizure
strokes	stroke
tumors	tumor
masses	mass
nodules	nodule
cysts	cyst
ulcers	ulcer
edemas	edema
effusions	effusion
murmurs	murmur
rhythms	rhythm
beats	beat
breaths	breath
lungs	lung
kidneys	kidney
livers	liver
hearts	heart
arteries	artery
veins	vein
vessels	vessel
valves	valve
muscles	muscle
bones	bone
joints	joint
nerves	nerve
cells	cell
counts	count
cultures	culture
specimens	specimen
samples	sample
images	image
scans	scan
scanned	scan
films	film
views	view
days	day
weeks	week
months	month
years	year
hours	hour
minutes	minute
times	time
episodes	episode
events	event
visits	visit
stays	stay
units	unit
doctors	doctor
nurses	nurse
physicians	physician
specialists	specialist
services	service
)WL";

}  // namespace phenonet
